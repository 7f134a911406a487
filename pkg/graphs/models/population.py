"""
Coefficient data of the general small-noise SPDE

    u_t(y) = F(y) + sqrt(eps) int_0^t int_U G(a, y, u_s(y)) W(ds da) + int_0^t (1/2) Delta u_s(y) ds

with the super-Brownian motion (SBM) and Fleming-Viot (FVP) instances, custom coefficients,
and numerical checks of the growth and modulus conditions on G.
"""
import math
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import torch

from graphs.grid import Field, FieldPath, Grid
from graphs.models.heat import propagator
from datasets.noise import MarkGrid


logger = logging.getLogger("Population")

KINDS = ("SBM", "FVP", "Custom")
MONOTONE_TOL = 1e-10


@dataclass
class ModelSpec:
    kind: str
    grid: Grid
    F: Field
    mark_grid: MarkGrid
    epsilon: float = 1e-3
    kappa: float = 0.25
    G: Optional[Callable] = None
    integrator: Optional[Callable] = None
    K: float = 1.0
    padding: str = "linear"
    name: str = field(default="")
    white_sigma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("model kind must be one of {}, got {}".format(KINDS, self.kind))
        if not self.epsilon >= 0 or not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be >= 0, got {}".format(self.epsilon))
        if not 0 < self.kappa < 0.5:
            raise ValueError("kappa must lie in (0, 1/2), got {}".format(self.kappa))
        if self.F.values.size != self.grid.nx + 1:
            raise ValueError("F has {} values, the grid has {} nodes".format(self.F.values.size, self.grid.nx + 1))
        if self.kind == "Custom" and self.G is None and self.integrator is None:
            raise ValueError("a Custom model needs G or an integrator")
        self._check_initial_condition()

    def _check_initial_condition(self):
        F = self.F.values
        if self.kind == "Custom":
            return
        if np.any(np.diff(F) < -MONOTONE_TOL):
            raise ValueError("{}: F must be non-decreasing".format(self.kind))
        if self.kind == "FVP":
            if F.min() < -MONOTONE_TOL or F.max() > 1 + MONOTONE_TOL:
                raise ValueError("FVP: F must be a distribution function with values in [0, 1]")
            if F[0] > 1e-6 or F[-1] < 1 - 1e-6:
                logger.warning("FVP: F(-L)=%.3g, F(L)=%.3g; mass is cut by the spatial window", F[0], F[-1])
        else:
            zero = np.argmin(np.abs(self.grid.nodes))
            if abs(self.grid.nodes[zero]) < 1e-12 and abs(F[zero]) > 1e-12:
                raise ValueError("SBM: F must vanish at y=0 (F(y) = mu_0([0, y]))")

    @property
    def a_eps(self):
        """a(eps) = eps^kappa."""
        return self.epsilon ** self.kappa

    @property
    def fluctuation_scale(self):
        """sqrt(eps) / a(eps), the factor from v back to u - u^0."""
        return self.epsilon ** (0.5 - self.kappa)

    @property
    def anchor(self):
        """Where distribution functions of the model vanish: y = 0 for SBM, -infinity otherwise."""
        return "zero" if self.kind == "SBM" else "minus-infinity"

    @property
    def state_range(self):
        if self.kind == "FVP":
            return 0.0, 1.0
        if self.kind == "SBM":
            return self.mark_grid.lo, self.mark_grid.hi
        bound = max(1.0, float(np.max(np.abs(self.F.values))))
        return -bound, bound

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=epsilon)

    def mark_integral(self, u, weights):
        """
        sum_j Gbar_j(y, u(y)) * weights_j, Gbar_j the average of G over mark cell j.
        u: (B, n) or (n,) tensor; weights: (B, na) or (na,) tensor.
        """
        squeeze = u.dim() == 1
        u2 = u.unsqueeze(0) if squeeze else u
        w2 = weights.unsqueeze(0) if weights.dim() == 1 else weights
        if u2.shape[0] == 1 and w2.shape[0] > 1:
            u2 = u2.expand(w2.shape[0], -1)
        elif w2.shape[0] != u2.shape[0]:
            w2 = w2.expand(u2.shape[0], -1)
        if self.kind == "SBM":
            zero = torch.zeros_like(u2[:, :1])
            out = torch.sign(u2) * (_cumulative_weight(self.mark_grid, w2, u2) -
                                    _cumulative_weight(self.mark_grid, w2, zero))
        elif self.kind == "FVP":
            out = _cumulative_weight(self.mark_grid, w2, u2) - u2 * w2.sum(dim=1, keepdim=True)
        elif self.integrator is not None:
            out = self.integrator(self, u2, w2)
        else:
            a = torch.as_tensor(self.mark_grid.midpoints, dtype=u2.dtype, device=u2.device)
            y = torch.as_tensor(self.grid.nodes, dtype=u2.dtype, device=u2.device)
            out = torch.einsum("bnj,bj->bn", self.G(a, y, u2), w2)
        return out.squeeze(0) if squeeze else out


def _cumulative_weight(mark_grid, weights, x):
    """Piecewise linear W(x) = int_{lo}^{x} w(a) da/lambda-cell, w constant per cell."""
    edges = torch.as_tensor(mark_grid.edge_array, dtype=x.dtype, device=x.device)
    na = mark_grid.na
    cumulative = torch.cat([torch.zeros_like(weights[:, :1]), torch.cumsum(weights, dim=1)], dim=1)
    xc = x.clamp(min=edges[0].item(), max=edges[-1].item()).contiguous()
    cell = (torch.searchsorted(edges, xc, right=True) - 1).clamp(0, na - 1)
    frac = (xc - edges[cell]) / (edges[cell + 1] - edges[cell])
    if cell.shape[0] != weights.shape[0]:
        cell = cell.expand(weights.shape[0], -1)
        frac = frac.expand(weights.shape[0], -1)
    return torch.gather(cumulative, 1, cell) + frac * torch.gather(weights, 1, cell)


def sbm_mark_halfwidth(F, epsilon, T=1.0):
    """A >= 2 max|u^0| plus five standard deviations of the state envelope."""
    top = float(np.max(np.abs(F.values)))
    return 2.0 * top + 5.0 * math.sqrt(max(epsilon, 0.0) * T * max(top, 1.0)) + 1e-3


def make_sbm(grid, F, epsilon=1e-3, kappa=0.25, na=256, A=None):
    A = A if A is not None else sbm_mark_halfwidth(F, epsilon, grid.T)
    if A < np.max(np.abs(F.values)):
        raise ValueError("SBM mark truncation A={} is below max|F|".format(A))
    return ModelSpec("SBM", grid, F, MarkGrid.uniform(-A, A, na), epsilon, kappa, name="sbm")


def make_fvp(grid, F, epsilon=1e-3, kappa=0.25, na=256):
    return ModelSpec("FVP", grid, F, MarkGrid.uniform(0.0, 1.0, na), epsilon, kappa, name="fvp")


def make_custom(grid, F, G, mark_grid, epsilon=1e-3, kappa=0.25, K=1.0, integrator=None, name="custom"):
    return ModelSpec("Custom", grid, F, mark_grid, epsilon, kappa, G=G, integrator=integrator, K=K, name=name)


def make_white_noise_model(grid, sigma=1.0, F=None, epsilon=1e-3, kappa=0.25):
    """
    Custom model G(a, y, u) = sigma * delta_y(a): one mark cell per node, so that the noise
    is space-time white with intensity sigma^2. With F = 0 and frozen sigma this is the
    linear stochastic heat equation.
    """
    marks = MarkGrid.centered_on(grid.nodes)
    dx = grid.dx

    def G(a, y, u):
        inside = (torch.abs(a.view(1, 1, -1) - y.view(1, -1, 1)) <= 0.5 * dx * (1 - 1e-9)).to(u.dtype)
        return sigma / dx * inside * torch.ones_like(u).unsqueeze(-1)

    def integrator(model, u, weights):
        return sigma / dx * weights

    F = F if F is not None else Field(np.zeros(grid.nx + 1))
    return ModelSpec("Custom", grid, F, marks, epsilon, kappa, G=G, integrator=integrator,
                     K=max(1.0, sigma ** 2 / dx), padding="linear", name="white", white_sigma=float(sigma))


def evaluate_G(model, a, y, u):
    a, y, u = (np.asarray(x, dtype=np.float64) for x in (a, y, u))
    if model.kind == "SBM":
        return (((0 <= a) & (a <= u)) | ((u <= a) & (a <= 0))).astype(np.float64)
    if model.kind == "FVP":
        return (a < u).astype(np.float64) - u
    a_t, y_t, u_t = (torch.as_tensor(np.atleast_1d(x)) for x in np.broadcast_arrays(a, y, u))
    values = model.G(a_t, y_t, u_t.view(1, -1))
    # the callable returns (1, n, na); pointwise evaluation reads the diagonal
    values = torch.diagonal(values[0]).numpy()
    return values.reshape(np.broadcast(a, y, u).shape)


def _custom_l2(model, y, integrand):
    a = torch.as_tensor(model.mark_grid.midpoints)
    lam = torch.as_tensor(model.mark_grid.lam)
    y_t = torch.as_tensor(np.atleast_1d(y))
    return integrand(a, y_t) @ lam


def g_l2_modulus(model, y, u1, u2):
    """int_U |G(a,y,u1) - G(a,y,u2)|^2 lambda(da)."""
    y, u1, u2 = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (y, u1, u2)))
    if model.kind == "SBM":
        lo, hi = model.state_range
        return np.abs(np.clip(u1, lo, hi) - np.clip(u2, lo, hi))
    if model.kind == "FVP":
        d = np.clip(u1, 0, 1) - np.clip(u2, 0, 1)
        return np.abs(d) - d * d
    out = []
    for yi, a1, a2 in zip(y.ravel(), u1.ravel(), u2.ravel()):
        def integrand(a, y_t):
            g1 = model.G(a, y_t, torch.full((1, 1), a1, dtype=torch.float64))[0, 0]
            g2 = model.G(a, y_t, torch.full((1, 1), a2, dtype=torch.float64))[0, 0]
            return (g1 - g2) ** 2
        out.append(float(_custom_l2(model, yi, integrand)))
    return np.asarray(out).reshape(y.shape)


def g_l2_bound(model, y, u):
    """int_U |G(a,y,u)|^2 lambda(da)."""
    y, u = np.broadcast_arrays(np.asarray(y, dtype=np.float64), np.asarray(u, dtype=np.float64))
    if model.kind == "SBM":
        A = model.mark_grid.hi
        if np.any(np.abs(u) > A):
            logger.warning("SBM mark truncation breached: |u|=%.4g > A=%.4g", float(np.max(np.abs(u))), A)
        return np.minimum(np.abs(u), A)
    if model.kind == "FVP":
        return u * (1.0 - u)
    out = []
    for yi, ui in zip(y.ravel(), u.ravel()):
        def integrand(a, y_t):
            return model.G(a, y_t, torch.full((1, 1), ui, dtype=torch.float64))[0, 0] ** 2
        out.append(float(_custom_l2(model, yi, integrand)))
    return np.asarray(out).reshape(y.shape)


def deterministic_flow(model, grid=None):
    """u^0: the eps = 0 solution, heat flow of F."""
    grid = grid or model.grid
    step = propagator(grid, grid.dt, model.padding)
    frames = np.empty((grid.nt + 1, grid.nx + 1))
    frames[0] = model.F.values
    with torch.no_grad():
        current = torch.from_numpy(model.F.values.copy())
        for k in range(grid.nt):
            current = step(current)
            frames[k + 1] = current.numpy()
    return FieldPath(grid, frames)


@dataclass
class ConditionReport:
    max_modulus_ratio: float
    max_growth_ratio: float
    samples: int
    K: float

    @property
    def passed(self):
        return self.max_modulus_ratio <= self.K * (1 + 1e-12) and self.max_growth_ratio <= self.K * (1 + 1e-12)


def check_conditions(model, sample_count=10000, seed=0, beta0=0.25):
    """
    Monte Carlo sweep of (y, u1, u2): the modulus ratio int|dG|^2 / |u1-u2| and the growth
    ratio int|G|^2 / (1 + u^2 + e^{2 beta0 |y|}). Exceeding K is reported, not raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = model.state_range
    y = rng.uniform(-model.grid.L, model.grid.L, sample_count)
    u1 = rng.uniform(lo, hi, sample_count)
    u2 = rng.uniform(lo, hi, sample_count)
    distinct = np.abs(u1 - u2) > 1e-12
    modulus = g_l2_modulus(model, y[distinct], u1[distinct], u2[distinct]) / np.abs(u1 - u2)[distinct]
    growth = g_l2_bound(model, y, u1) / (1.0 + u1 ** 2 + np.exp(2 * beta0 * np.abs(y)))
    report = ConditionReport(float(np.max(modulus)), float(np.max(growth)), sample_count, model.K)
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, "%s conditions: modulus ratio %.6g, growth ratio %.6g (K=%g, %d samples)",
               model.kind, report.max_modulus_ratio, report.max_growth_ratio, model.K, sample_count)
    return report


def noise_covariance(model, u1, u2):
    """
    int_U G(a,y,u1) G(a,y,u2) lambda(da) in closed form: SBM min(|u1|,|u2|) on equal signs,
    FVP min(u1,u2) - u1 u2.
    """
    u1, u2 = np.broadcast_arrays(np.asarray(u1, dtype=np.float64), np.asarray(u2, dtype=np.float64))
    if model.kind == "SBM":
        lo, hi = model.state_range
        a, b = np.clip(u1, lo, hi), np.clip(u2, lo, hi)
        return np.where(a * b > 0, np.minimum(np.abs(a), np.abs(b)), 0.0)
    if model.kind == "FVP":
        return np.minimum(u1, u2) - u1 * u2
    raise ValueError("closed-form noise covariance exists for SBM and FVP only")
