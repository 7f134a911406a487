"""
Space-time discretization of [0,T] x [-L, L]

Fields live on the nx+1 nodes y_i = -L + i*dx, paths on the nt+1 times t_k = k*dt.
Weighted norms and the Hoelder metric of the B_beta / B_{alpha,beta} spaces are evaluated
on the nodes.
"""
import math
import logging
from dataclasses import dataclass, field

import numpy as np


logger = logging.getLogger("Grid")


@dataclass(frozen=True)
class Grid:
    L: float
    nx: int
    T: float
    nt: int

    @property
    def dx(self):
        return 2.0 * self.L / self.nx

    @property
    def dt(self):
        return self.T / self.nt

    @property
    def nodes(self):
        return -self.L + self.dx * np.arange(self.nx + 1)

    @property
    def times(self):
        return self.dt * np.arange(self.nt + 1)

    def node_index(self, y, atol=1e-9):
        """Index of the node at y; raises if y is not a node."""
        i = int(round((y + self.L) / self.dx))
        if i < 0 or i > self.nx or abs(self.nodes[i] - y) > atol * max(1.0, self.L):
            raise ValueError("y={} is not a grid node".format(y))
        return i

    def time_index(self, t, atol=1e-9):
        k = int(round(t / self.dt))
        if k < 0 or k > self.nt or abs(k * self.dt - t) > atol * max(1.0, self.T):
            raise ValueError("t={} is not a grid time".format(t))
        return k

    def interior(self, margin):
        """Mask of nodes with |y| <= L - margin."""
        return np.abs(self.nodes) <= self.L - margin + 1e-12

    def refine(self, factor=2):
        return Grid(L=self.L, nx=self.nx * factor, T=self.T, nt=self.nt * factor)


def make_grid(L, nx, T=1.0, nt=100):
    for name, value in (("L", L), ("T", T)):
        if not np.isfinite(value) or value <= 0:
            raise ValueError("{} must be positive and finite, got {}".format(name, value))
    for name, value in (("nx", nx), ("nt", nt)):
        if int(value) != value or value < 2:
            raise ValueError("{} must be an integer >= 2, got {}".format(name, value))
    return Grid(L=float(L), nx=int(nx), T=float(T), nt=int(nt))


@dataclass(frozen=True)
class WeightParams:
    beta: float = 1.0
    beta0: float = 0.25
    beta1: float = 0.5
    alpha: float = 0.4

    def __post_init__(self):
        if not 0 < self.beta0 < self.beta1 < self.beta:
            raise ValueError("need 0 < beta0 < beta1 < beta, got {}, {}, {}".format(
                self.beta0, self.beta1, self.beta))
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2), got {}".format(self.alpha))


@dataclass
class Field:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("a Field is one-dimensional, got shape {}".format(self.values.shape))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Field values must be finite")


@dataclass
class FieldPath:
    grid: Grid
    frames: np.ndarray
    role: str = field(default="field-path")

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        expected = (self.grid.nt + 1, self.grid.nx + 1)
        if self.frames.shape != expected:
            raise ValueError("path frames have shape {}, expected {}".format(self.frames.shape, expected))

    def __getitem__(self, k):
        return Field(self.frames[k])

    def weighted_sup_norm(self, beta):
        """sup over t of ||u_t||_beta, the norm of C([0,1]; B_beta)."""
        weight = np.exp(-beta * np.abs(self.grid.nodes))
        return float(np.max(np.abs(self.frames) * weight))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nt + 1, grid.nx + 1)))


def heat_kernel(t, x):
    """Gaussian density p_t(x) = exp(-x^2/2t)/sqrt(2 pi t)."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("heat_kernel needs t > 0")
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-x * x / (2.0 * t)) / np.sqrt(2.0 * math.pi * t)
    return float(out) if out.ndim == 0 else out


def _values(f):
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=np.float64)


def weighted_sup_norm(f, beta, nodes):
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(np.max(np.exp(-beta * np.abs(nodes)) * np.abs(_values(f))))


def holder_seminorm(w, nodes, alpha, m):
    """max |w(y1)-w(y2)| / |y1-y2|^alpha over node pairs in [-m, m]."""
    inside = np.abs(nodes) <= m + 1e-12
    y, values = nodes[inside], w[inside]
    if y.size < 2:
        return 0.0
    dy = np.abs(y[:, None] - y[None, :])
    dw = np.abs(values[:, None] - values[None, :])
    off = dy > 0
    return float(np.max(dw[off] / dy[off] ** alpha))


def holder_metric(u, v, wp, nodes, m_max=None):
    """
    d_{alpha,beta}(u, v) = sum_m 2^{-m} (||u - v||_{m,alpha,beta} ^ 1), truncated at m_max.
    The neglected tail is at most 2^{-m_max}.
    """
    w = _values(u) - _values(v)
    L = float(np.max(np.abs(nodes)))
    if m_max is None:
        m_max = int(math.floor(L))
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if m_max > L + 1e-12:
        raise ValueError("grid [-{0}, {0}] does not cover m_max={1}".format(L, m_max))
    sup_part = weighted_sup_norm(w, wp.beta, nodes)
    total = 0.0
    for m in range(1, m_max + 1):
        norm_m = sup_part + math.exp(-wp.beta * m) * holder_seminorm(w, nodes, wp.alpha, m)
        total += 2.0 ** (-m) * min(norm_m, 1.0)
    return total


def initial_condition_constants(F, nodes, wp, m_max=None):
    """
    Discrete constants K of F in B_{alpha,beta0}: the growth bound |F| <= K e^{beta0|y|}
    and, per m, the Hoelder bound |F(y1)-F(y2)| <= K e^{beta0 m} |y1-y2|^alpha.
    """
    values = _values(F)
    growth = float(np.max(np.abs(values) * np.exp(-wp.beta0 * np.abs(nodes))))
    L = float(np.max(np.abs(nodes)))
    m_max = m_max or max(1, int(math.floor(L)))
    holder = max(math.exp(-wp.beta0 * m) * holder_seminorm(values, nodes, wp.alpha, m)
                 for m in range(1, m_max + 1))
    return growth, holder
