"""
Function-valued <-> measure-valued pictures

A distribution function u on the nodes is identified with the signed measure xi(u) whose
density on cell [y_i, y_{i+1}) is (u_{i+1} - u_i)/dx; paths map framewise (eta). Pairings
<mu, f> = sum_i f(y_i) w_i dx locate each cell at its left node.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from graphs.grid import Field, FieldPath


logger = logging.getLogger("Measures")


def _values(f):
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=np.float64)


ANCHORS = ("minus-infinity", "zero")


def anchored_left(densities, grid, anchor="minus-infinity"):
    """
    Values at -L of the distribution functions of the frames, fixed by where they vanish:
    at -L for "minus-infinity" (mass below the window is dropped), at y = 0 for "zero".
    """
    if anchor not in ANCHORS:
        raise ValueError("anchor must be one of {}, got {}".format(ANCHORS, anchor))
    densities = np.atleast_2d(np.asarray(densities, dtype=np.float64))
    if anchor == "minus-infinity":
        return np.zeros(densities.shape[0])
    cumulative = np.concatenate([np.zeros((densities.shape[0], 1)), np.cumsum(densities * grid.dx, axis=1)], axis=1)
    return -np.array([np.interp(0.0, grid.nodes, row) for row in cumulative])


@dataclass
class SignedMeasurePath:
    grid: object
    densities: np.ndarray
    beta: float = 1.0
    left: np.ndarray = None
    role: str = field(default="measure-density")
    anchor: str = "minus-infinity"

    def __post_init__(self):
        self.densities = np.asarray(self.densities, dtype=np.float64)
        expected = (self.grid.nt + 1, self.grid.nx)
        if self.densities.shape != expected:
            raise ValueError("densities have shape {}, expected {}".format(self.densities.shape, expected))
        if self.anchor not in ANCHORS:
            raise ValueError("anchor must be one of {}, got {}".format(ANCHORS, self.anchor))
        if self.left is None:
            self.left = anchored_left(self.densities, self.grid, self.anchor)
        else:
            self.left = np.asarray(self.left, dtype=np.float64)

    def __getitem__(self, k):
        return self.densities[k]

    def __mul__(self, c):
        return SignedMeasurePath(self.grid, c * self.densities, self.beta, c * self.left, anchor=self.anchor)

    __rmul__ = __mul__

    def total_mass(self):
        return self.densities.sum(axis=1) * self.grid.dx

    def weighted_total_variation(self):
        return np.array([weighted_total_variation(w, self.beta, self.grid) for w in self.densities])

    def has_zero_mass(self, rel_tol=1e-8):
        """Framewise signed mass vanishes relative to the frame's total variation."""
        tv = np.abs(self.densities).sum(axis=1) * self.grid.dx
        return bool(np.all(np.abs(self.total_mass()) <= rel_tol * np.maximum(tv, 1e-300)))

    def to_field_path(self, anchored=False):
        """
        Cumulative integration back to distribution functions, from the stored values at -L or,
        with anchored=True, in the convention of the path's anchor.
        """
        left = anchored_left(self.densities, self.grid, self.anchor) if anchored else self.left
        frames = np.array([measure_to_field(w, self.grid, l) for w, l in zip(self.densities, left)])
        return FieldPath(self.grid, frames)


def field_to_measure(v, grid):
    """Density of xi(v) on the nx cells."""
    return np.diff(_values(v)) / grid.dx


def measure_to_field(w, grid, left_value=0.0):
    return left_value + np.concatenate([[0.0], np.cumsum(np.asarray(w) * grid.dx)])


def path_to_measure_path(v, beta=1.0, anchor="minus-infinity"):
    """eta(v); the values at -L are kept, the anchor is kept for to_field_path(anchored=True)."""
    return SignedMeasurePath(v.grid, np.diff(v.frames, axis=1) / v.grid.dx, beta, v.frames[:, 0].copy(),
                             anchor=anchor)


def pair(mu, f, grid):
    """<mu, f> = sum_i f(y_i) w_i dx."""
    w = np.asarray(mu, dtype=np.float64)
    values = _values(f)
    if values.size == grid.nx + 1:
        values = values[:-1]
    if values.size != w.size:
        raise ValueError("test function has {} values, measure has {} cells".format(values.size, w.size))
    return float(np.dot(values, w) * grid.dx)


def weighted_total_variation(w, beta, grid):
    """int e^{-beta|y|} |w(y)| dy."""
    return float(np.sum(np.exp(-beta * np.abs(grid.nodes[:-1])) * np.abs(w)) * grid.dx)


def rho_beta(mu, nu, beta, grid):
    """
    sup |int f e^{-beta|x|} d(mu - nu)| over |f| <= 1, |f'| <= 1, with f sampled at the left nodes;
    a linear program solved by HiGHS.
    """
    diff = np.asarray(mu, dtype=np.float64) - np.asarray(nu, dtype=np.float64)
    c = np.exp(-beta * np.abs(grid.nodes[:-1])) * diff * grid.dx
    if not np.any(c):
        return 0.0
    n = c.size
    chain = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")
    A_ub = sparse.vstack([chain, -chain], format="csr")
    b_ub = np.full(2 * (n - 1), grid.dx)
    result = linprog(-c, A_ub=A_ub, b_ub=b_ub, bounds=[(-1.0, 1.0)] * n, method="highs",
                     options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if result.status != 0:
        logger.warning("rho_beta LP ended with status %d: %s", result.status, result.message)
    return float(max(-result.fun, 0.0))
