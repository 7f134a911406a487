"""
Space-time white noise on the (t, a) lattice

W([t_k, t_k+1] x [a_j, a_j+1]) are independent centered Gaussians with variance
dt * lambda([a_j, a_j+1]). Every row (one time step, all mark cells) is drawn from a Philox
stream keyed on (seed, replicate) at counter block `step`, so any replicate or step can be
regenerated on its own, in any order, without shared state.
"""
from dataclasses import dataclass

import numpy as np


_COUNTER_STRIDE = 1 << 128


@dataclass(frozen=True)
class MarkGrid:
    """Partition of the mark space U into cells; lambda = intensity * Lebesgue."""
    edges: tuple
    intensity: float = 1.0

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 3:
            raise ValueError("a mark grid needs at least two cells")
        if self.intensity <= 0 or np.any(np.diff(edges) <= 0):
            raise ValueError("mark cells must have positive lambda-measure")

    @classmethod
    def uniform(cls, lo, hi, na, intensity=1.0):
        if na < 2:
            raise ValueError("na must be >= 2")
        return cls(tuple(np.linspace(lo, hi, na + 1)), intensity)

    @classmethod
    def centered_on(cls, nodes, intensity=1.0):
        """One cell per node, [y_i - dx/2, y_i + dx/2]."""
        nodes = np.asarray(nodes, dtype=np.float64)
        half = 0.5 * (nodes[1] - nodes[0])
        return cls(tuple(np.append(nodes - half, nodes[-1] + half)), intensity)

    @property
    def edge_array(self):
        return np.asarray(self.edges, dtype=np.float64)

    @property
    def na(self):
        return len(self.edges) - 1

    @property
    def lam(self):
        return self.intensity * np.diff(self.edge_array)

    @property
    def midpoints(self):
        e = self.edge_array
        return 0.5 * (e[1:] + e[:-1])

    @property
    def lo(self):
        return self.edges[0]

    @property
    def hi(self):
        return self.edges[-1]


@dataclass
class NoiseRealization:
    increments: np.ndarray
    mark_grid: MarkGrid
    seed: int
    replicate: int

    @property
    def shape(self):
        return self.increments.shape


def _generator(seed, replicate, step):
    if not (0 <= seed < 2 ** 64 and 0 <= replicate < 2 ** 64):
        raise ValueError("seed and replicate must be unsigned 64-bit integers")
    key = (int(seed) << 64) | int(replicate)
    return np.random.Generator(np.random.Philox(key=key, counter=int(step) * _COUNTER_STRIDE))


def noise_row(seed, replicate, step, mark_grid, dt):
    """W over [t_step, t_step+1] x every mark cell, for one replicate."""
    std = np.sqrt(dt * mark_grid.lam)
    return std * _generator(seed, replicate, step).standard_normal(mark_grid.na)


def noise_rows(seed, replicates, step, mark_grid, dt):
    """Stacked rows for several replicates, shape (len(replicates), na)."""
    return np.stack([noise_row(seed, r, step, mark_grid, dt) for r in replicates])


def sample_white_noise(grid, mark_grid, seed, replicate):
    increments = np.stack([noise_row(seed, replicate, k, mark_grid, grid.dt) for k in range(grid.nt)])
    return NoiseRealization(increments, mark_grid, int(seed), int(replicate))
