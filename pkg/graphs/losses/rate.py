"""
Rate functionals of the moderate deviations

* rate_general: I(v) = (1/2) inf { ||h||^2 : v = gamma(h) }, by a matrix-free minimal-norm
  least-squares solve (LSQR) with the adjoint of gamma from autograd.
* rate_sbm / rate_fvp: (1/2) int int |d(omega' - (1/2) Delta* omega)/d mu^0_t|^2 d mu^0_t dt
  through the discrete Radon-Nikodym derivative.
* Cameron-Martin membership proxies and the change-of-variables identity.
"""
import math
import logging
import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, lsqr

from graphs.measures import measure_to_field, pair, weighted_total_variation
from graphs.models.controlled import Control, ControlledMap
from graphs.models.heat import PADDINGS, propagator


logger = logging.getLogger("Rate")

LAPLACIANS = ("semigroup", "central")
MAX_LOG_AMPLIFICATION = 20.0
# the minimal-norm energy is known to the relative accuracy of the LSQR stopping rule
WITNESS_REL_SLACK = 1e-6


@dataclass
class RateReport:
    value: float
    residual: float
    method: str
    infinite: bool = False
    minimizer: Optional[Control] = None
    defect: float = 0.0
    iterations: int = 0

    def to_dict(self):
        return {"value": self.value, "infinite": self.infinite, "residual": self.residual, "method": self.method,
                "defect": self.defect, "iterations": self.iterations,
                "minimizer_shape": None if self.minimizer is None else list(self.minimizer.values.shape)}


def _control_operator(gamma, rows):
    """
    LinearOperator x -> selected entries of gamma(x / sqrt(dt lambda)), so that ||x||^2 is the
    control energy norm.
    :param rows: callable picking the constrained entries from a (nt+1, nx+1) tensor, and its transpose
    """
    pick, place = rows
    scale = torch.sqrt(gamma.cell_dt).view(1, -1)
    shape = gamma.control_shape
    n_in = shape[0] * shape[1]

    def matvec(x):
        h = torch.as_tensor(np.asarray(x).reshape(shape)) / scale
        with torch.no_grad():
            return pick(gamma(h)).numpy().ravel()

    def rmatvec(y):
        r = place(torch.as_tensor(np.asarray(y, dtype=np.float64).ravel()))
        return (gamma.adjoint(r) / scale).numpy().ravel()

    n_out = pick(torch.zeros(gamma.grid.nt + 1, gamma.grid.nx + 1, dtype=torch.float64)).numel()
    return LinearOperator((n_out, n_in), matvec=matvec, rmatvec=rmatvec, dtype=np.float64), scale


def _solve_min_norm(gamma, rows, target, tol, iter_lim, range_tol, method):
    operator, scale = _control_operator(gamma, rows)
    bnorm = float(np.linalg.norm(target))
    if bnorm == 0:
        return RateReport(0.0, 0.0, method, minimizer=Control.zeros(gamma.grid.nt, gamma.mark_grid))
    iter_lim = iter_lim or 10 * operator.shape[1]
    x, istop, itn, r1norm = lsqr(operator, target, atol=tol, btol=tol, iter_lim=iter_lim)[:4]
    h = Control(x.reshape(gamma.control_shape) / scale.numpy(), gamma.mark_grid)
    infinite = r1norm > range_tol * (1.0 + bnorm)
    if infinite:
        logger.info("target outside the attainable range: residual %.3g after %d iterations (stop %d)",
                    r1norm, itn, istop)
    return RateReport(0.5 * float(np.dot(x, x)), float(r1norm), method, infinite, h, iterations=int(itn))


def rate_general(v, model, u0, tol=1e-8, range_tol=1e-6, iter_lim=None):
    """
    Minimal-norm control reproducing v on the grid. Residuals are measured in the discrete
    L^2 path norm sum_k sum_i v^2 dx dt.
    :return: RateReport; infinite=True when v is not attainable within range_tol * (1 + ||v||)
    """
    grid = v.grid
    if np.max(np.abs(v.frames[0])) > 1e-12 * max(1.0, float(np.max(np.abs(v.frames)))):
        raise ValueError("rate_general needs v_0 = 0")
    gamma = ControlledMap(model, u0, grid)
    weight = math.sqrt(grid.dx * grid.dt)
    n = grid.nx + 1

    def pick(frames):
        return frames[1:] * weight

    def place(y):
        r = torch.zeros(grid.nt + 1, n, dtype=torch.float64)
        r[1:] = y.view(grid.nt, n) * weight
        return r

    target = v.frames[1:].ravel() * weight
    return _solve_min_norm(gamma, (pick, place), target, tol, iter_lim, range_tol, "variational")


def within_witness_bound(rate, energy, rel=WITNESS_REL_SLACK):
    """A control h with gamma(h) = v bounds I(v) by its energy; the check allows the solver's slack."""
    return rate <= energy * (1.0 + rel) + 1e-12


def rate_point_constraint(model, u0, y_index, delta, t_index=None, tol=1e-10, range_tol=1e-6):
    """min { I(v) : v_t(y*) = delta }, the same solver restricted to one constraint."""
    grid = u0.grid
    t_index = grid.nt if t_index is None else t_index
    if not 1 <= t_index <= grid.nt:
        raise ValueError("t_index must lie in [1, nt], got {}".format(t_index))
    gamma = ControlledMap(model, u0, grid)

    def pick(frames):
        return frames[t_index, y_index].view(1)

    def place(y):
        r = torch.zeros(grid.nt + 1, grid.nx + 1, dtype=torch.float64)
        r[t_index, y_index] = y[0]
        return r

    report = _solve_min_norm(gamma, (pick, place), np.array([float(delta)]), tol, None, range_tol,
                             "variational-point")
    logger.debug("point constraint at (t=%g, y=%g): rate %.6g", grid.times[t_index], grid.nodes[y_index],
                 report.value)
    return report


@dataclass
class RNDerivative:
    values: np.ndarray
    mask: np.ndarray
    drift: np.ndarray
    defect: float
    relative_defect: float


def _second_difference(w, dx):
    padded = np.concatenate([w[:, :1], w, w[:, -1:]], axis=1)
    return (padded[:, 2:] - 2 * padded[:, 1:-1] + padded[:, :-2]) / dx ** 2


@functools.lru_cache(maxsize=32)
def _step_factors(grid, dt, padding):
    """LU factors of the one-step propagator written out as an (nx+1, nx+1) matrix."""
    with torch.no_grad():
        columns = propagator(grid, dt, padding)(torch.eye(grid.nx + 1, dtype=torch.float64)).numpy()
    return lu_factor(columns.T)


def drift_density(omega, laplacian="semigroup", padding="linear"):
    """
    (omega' - (1/2) Delta* omega) as densities on (nt, nx).
    "semigroup": (xi(P_dt^{-1} xi^{-1} omega_{k+1}) - omega_k) / dt, the exact inverse of the
    stepping v_{k+1} = P_dt (v_k + f_k). When P_dt^{-1} would amplify round-off by more than
    e^MAX_LOG_AMPLIFICATION the one-step smoothed drift (omega_{k+1} - xi(P_dt xi^{-1} omega_k)) / dt
    is returned instead;
    "central": forward time difference and second central difference with edge rows copied.
    """
    grid = omega.grid
    w = omega.densities
    if laplacian == "central":
        return (w[1:] - w[:-1]) / grid.dt - 0.5 * _second_difference(w[:-1], grid.dx)
    if laplacian != "semigroup":
        raise ValueError("laplacian must be one of {}, got {}".format(LAPLACIANS, laplacian))
    if padding not in PADDINGS:
        raise ValueError("padding must be one of {}".format(PADDINGS))
    fields = np.array([measure_to_field(w[k], grid, omega.left[k]) for k in range(grid.nt + 1)])
    # the Nyquist mode of P_dt decays like exp(-2 dt / dx^2)
    if 2.0 * grid.dt / grid.dx ** 2 > MAX_LOG_AMPLIFICATION:
        logger.warning("dt/dx^2 = %.3g is too large to invert the heat step; using the one-step smoothed drift",
                       grid.dt / grid.dx ** 2)
        with torch.no_grad():
            propagated = propagator(grid, grid.dt, padding)(torch.from_numpy(fields[:-1])).numpy()
        return (w[1:] - np.diff(propagated, axis=1) / grid.dx) / grid.dt
    pre_step = lu_solve(_step_factors(grid, grid.dt, padding), fields[1:].T).T
    return (np.diff(pre_step, axis=1) / grid.dx - w[:-1]) / grid.dt


def rn_derivative(omega, mu0, floor=None, laplacian="semigroup", padding="linear"):
    """
    Discrete d(omega' - (1/2) Delta* omega)/d mu^0_t on frames k = 0..nt-1. Cells with mu^0
    density below floor (default 1e-8 of the frame maximum) are masked; the drift mass found
    there is the absolute-continuity defect.
    """
    if omega.grid != mu0.grid:
        raise ValueError("omega and mu0 live on different grids")
    grid = omega.grid
    m0 = mu0.densities[:-1]
    if np.any(m0 < -1e-12 * max(1.0, float(np.max(np.abs(m0))))):
        raise ValueError("mu0 must be a nonnegative measure path")
    drift = drift_density(omega, laplacian, padding)
    if floor is None:
        threshold = 1e-8 * np.max(m0, axis=1, keepdims=True)
    else:
        threshold = np.full((grid.nt, 1), float(floor))
    mask = m0 > threshold
    values = np.where(mask, drift / np.where(mask, m0, 1.0), 0.0)
    masked_mass = float(np.sum(np.abs(drift[~mask])) * grid.dx * grid.dt)
    total_mass = float(np.sum(np.abs(drift)) * grid.dx * grid.dt)
    relative = masked_mass / total_mass if total_mass > 0 else 0.0
    return RNDerivative(values, mask, drift, masked_mass, relative)


def _check_start(omega):
    if np.any(omega.densities[0] != 0):
        raise ValueError("omega_0 must be the zero measure")


def _energy(rn, mu0):
    grid = mu0.grid
    return float(np.sum(rn.values ** 2 * mu0.densities[:-1]) * grid.dx * grid.dt)


def rate_sbm(omega, mu0, floor=None, laplacian="semigroup", padding="linear", defect_tol=1e-4):
    _check_start(omega)
    rn = rn_derivative(omega, mu0, floor, laplacian, padding)
    infinite = rn.relative_defect > defect_tol
    if infinite:
        logger.info("SBM: omega is not absolutely continuous w.r.t. mu^0 (relative defect %.3g)", rn.relative_defect)
    return RateReport(0.5 * _energy(rn, mu0), 0.0, "closed-form-sbm", infinite, defect=rn.defect)


def centering_defects(rn, mu0):
    """<mu^0_t, rn_t> / <mu^0_t, 1> per frame."""
    grid = mu0.grid
    mass = np.array([pair(m, np.ones(grid.nx), grid) for m in mu0.densities[:-1]])
    moment = np.array([pair(m * r, np.ones(grid.nx), grid) for m, r in zip(mu0.densities[:-1], rn.values)])
    return moment / np.where(mass > 0, mass, 1.0)


def rate_fvp(omega, mu0, floor=None, laplacian="semigroup", padding="linear", defect_tol=1e-4, center_tol=1e-6):
    """As rate_sbm, after centering rn against mu^0_t when it is not centered already."""
    _check_start(omega)
    if not omega.has_zero_mass(rel_tol=1e-6):
        logger.warning("FVP: omega frames carry nonzero signed mass up to %.3g",
                       float(np.max(np.abs(omega.total_mass()))))
    rn = rn_derivative(omega, mu0, floor, laplacian, padding)
    shift = centering_defects(rn, mu0)
    scale = math.sqrt(max(_energy(rn, mu0), 1e-300))
    if np.max(np.abs(shift)) > center_tol * max(scale, 1.0):
        logger.info("FVP: Radon-Nikodym derivative not centered (max |<mu0, rn>| = %.3g); using the centered one",
                    float(np.max(np.abs(shift))))
        rn.values = np.where(rn.mask, rn.values - shift[:, None], 0.0)
    infinite = rn.relative_defect > defect_tol
    return RateReport(0.5 * _energy(rn, mu0), 0.0, "closed-form-fvp", infinite, defect=rn.defect)


@dataclass
class CMReport:
    starts_at_zero: bool
    abs_cont_time: bool
    modulus: float
    abs_cont_measure: bool
    defect: float
    energy: float
    centered: Optional[bool] = None
    centering_defect: float = 0.0

    @property
    def passed(self):
        return (self.starts_at_zero and self.abs_cont_time and self.abs_cont_measure and math.isfinite(self.energy)
                and self.centered is not False)

    def to_dict(self):
        return dict(self.__dict__, passed=self.passed)


def cameron_martin_check(omega, mu0, model_kind, floor=None, tol=1e-4, time_tol=0.25, center_tol=1e-3,
                         laplacian="semigroup", padding="linear"):
    """
    Discrete proxies of membership in H (and H-tilde for FVP):
    omega_0 = 0; small weighted-TV increments per step (with the modulus max increment / dt);
    drift absolutely continuous w.r.t. mu^0 (relative defect <= tol); finite energy
    (1/2) int int rn^2 d mu^0 dt; for FVP, <mu^0_t, rn_t> = 0 within center_tol.
    """
    grid = omega.grid
    starts = bool(np.all(omega.densities[0] == 0))
    increments = np.array([weighted_total_variation(d, omega.beta, grid) for d in np.diff(omega.densities, axis=0)])
    size = max(weighted_total_variation(d, omega.beta, grid) for d in omega.densities)
    modulus = float(np.max(increments) / grid.dt)
    time_ok = bool(np.max(increments) <= time_tol * (1.0 + size))
    rn = rn_derivative(omega, mu0, floor, laplacian, padding)
    energy = 0.5 * _energy(rn, mu0)
    centered, center_defect = None, 0.0
    if model_kind == "FVP":
        center_defect = float(np.max(np.abs(centering_defects(rn, mu0))))
        centered = center_defect <= center_tol * max(1.0, math.sqrt(2 * energy))
    report = CMReport(starts, time_ok, modulus, rn.relative_defect <= tol, rn.defect, energy, centered, center_defect)
    logger.debug("Cameron-Martin proxies: %s", report.to_dict())
    return report


def change_of_variables_check(h, u0, mu0_density, grid, mark_grid=None):
    """
    |int_U h(a)^2 da - int h(u^0(y))^2 mu^0(dy)|.
    h is either a vectorized callable (trapezoid over the mark nodes on the left, Stieltjes
    trapezoid over the space cells on the right) or per-cell values on mark_grid (exact
    integrals of the piecewise constant h^2 on both sides).
    """
    u = u0.values if hasattr(u0, "values") else np.asarray(u0, dtype=np.float64)
    if np.any(np.diff(u) < -1e-12):
        raise ValueError("change of variables needs a non-decreasing u0")
    if np.all(np.diff(u) <= 0):
        raise ValueError("u0 is flat on the whole window")
    m = mu0_density.values if hasattr(mu0_density, "values") else np.asarray(mu0_density, dtype=np.float64)
    if m.size != grid.nx:
        raise ValueError("mu0 density must be given on the {} cells".format(grid.nx))
    if mark_grid is None:
        raise ValueError("a mark grid is needed for the left-hand side")

    if callable(h):
        edges = mark_grid.edge_array
        g = h(edges) ** 2
        left = float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(edges))) * mark_grid.intensity
        gu = h(u) ** 2
        right = float(np.sum(0.5 * (gu[1:] + gu[:-1]) * m * grid.dx))
    else:
        values = np.asarray(h, dtype=np.float64)
        if values.size != mark_grid.na:
            raise ValueError("h has {} cell values, mark grid has {} cells".format(values.size, mark_grid.na))
        left = float(np.sum(values ** 2 * mark_grid.lam))
        edges = mark_grid.edge_array
        cumulative = np.concatenate([[0.0], np.cumsum(values ** 2 * mark_grid.lam)])
        H = np.interp(u, edges, cumulative)
        # cells of mu0 carry the mass m dx; spread it over the u-increment of the cell
        du = np.diff(u)
        ratio = np.where(du > 0, m * grid.dx / np.where(du > 0, du, 1.0), 0.0)
        right = float(np.sum(np.diff(H) * ratio))
    return abs(left - right)
