"""
Covariance of the Gaussian limit of the fluctuations

    v_t(y) = int_0^t int_U phi_s(a, y) W(ds da),   phi_s(a, y) = int p_{t-s}(y - x) G(a, x, u^0_s(x)) dx

so that Cov(v_t(y1), v_t(y2)) = int_0^t sum_j lambda_j phi_s(a_j, y1) phi_s(a_j, y2) ds. For the
space-time white model the x-integral is done in closed form with
p_r(y1 - x) p_r(y2 - x) = p_{2r}(y1 - y2) p_{r/2}(x - (y1 + y2)/2).
discrete_limit_covariance gives the same covariance for the stepping scheme itself.
"""
import math
import logging

import numpy as np
import torch
from scipy.stats import norm

from graphs.grid import heat_kernel
from graphs.models.heat import HeatPropagator, propagator
from graphs.models.population import deterministic_flow


logger = logging.getLogger("Covariance")


def time_nodes(t, panels=64, slices=8):
    """
    Quadrature in r = t - s: midpoint panels on [t/panels, t], the last panel (0, t/panels]
    split into geometric slices plus a tail, integrated with the rule exact for r^{-1/2}.
    :return: (nodes, weights)
    """
    if t <= 0:
        raise ValueError("t must be positive, got {}".format(t))
    h = t / panels
    edges = np.linspace(h, t, panels)
    nodes = list(0.5 * (edges[1:] + edges[:-1]))
    weights = list(np.diff(edges))
    bounds = [h * 2.0 ** (-m) for m in range(slices + 1)] + [0.0]
    for b, a in zip(bounds[:-1], bounds[1:]):
        m = 0.5 * (a + b)
        nodes.append(m)
        weights.append(2.0 * math.sqrt(m) * (math.sqrt(b) - math.sqrt(a)))
    return np.asarray(nodes), np.asarray(weights)


def _cell_weights(grid, y, r):
    """int over the cell of node i of p_r(y - x) dx, for every node."""
    x = grid.nodes
    half = 0.5 * grid.dx
    s = math.sqrt(r)
    return norm.cdf((x + half - y) / s) - norm.cdf((x - half - y) / s)


def _flow_at(model, grid, s):
    if s <= 0:
        return model.F.values
    with torch.no_grad():
        return HeatPropagator(grid, s, model.padding)(torch.from_numpy(model.F.values.copy())).numpy()


def _mark_matrix(model, u):
    """(na, nx+1) cell averages Gbar_j(x_i, u(x_i))."""
    na = model.mark_grid.na
    u_t = torch.as_tensor(u, dtype=torch.float64).unsqueeze(0).expand(na, -1)
    with torch.no_grad():
        return model.mark_integral(u_t, torch.eye(na, dtype=torch.float64)).numpy()


def limit_covariance_matrix(model, grid, t, ys, panels=64, slices=8):
    """Cov(v_t(y_a), v_t(y_b)) for all pairs of the locations ys."""
    ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
    r_nodes, r_weights = time_nodes(t, panels, slices)
    if model.white_sigma is not None:
        d = ys[:, None] - ys[None, :]
        total = sum(w * heat_kernel(2.0 * r, d) for r, w in zip(r_nodes, r_weights))
        return model.white_sigma ** 2 * total
    lam = model.mark_grid.lam
    out = np.zeros((ys.size, ys.size))
    for r, w in zip(r_nodes, r_weights):
        gbar = _mark_matrix(model, _flow_at(model, grid, t - r))
        phi = np.stack([gbar @ _cell_weights(grid, y, r) for y in ys])
        out += w * (phi * lam[None, :]) @ phi.T
    return out


def discrete_limit_covariance(model, grid, t, ys, u0=None):
    """
    Covariance at the nodes ys of the linearized scheme, the fluctuation stepping with the
    coefficient frozen at u^0:

        sum_{k < n} dt sum_j lambda_j (P_dt^{n-k} Gbar_{k,j})(y1) (P_dt^{n-k} Gbar_{k,j})(y2),   t = t_n

    It differs from limit_covariance_matrix by the time and space discretization only.
    """
    n = grid.time_index(t)
    if n == 0:
        raise ValueError("t must lie in (0, T], got {}".format(t))
    index = [grid.node_index(y) for y in np.atleast_1d(ys)]
    frames = (u0 if u0 is not None else deterministic_flow(model, grid)).frames
    with torch.no_grad():
        step = propagator(grid, grid.dt, model.padding)(torch.eye(grid.nx + 1, dtype=torch.float64)).numpy().T
    lam = model.mark_grid.lam
    # rows of P_dt^{n-k} at the probe nodes
    rows = step[index]
    out = np.zeros((len(index), len(index)))
    for k in range(n - 1, -1, -1):
        phi = _mark_matrix(model, frames[k]) @ rows.T
        out += grid.dt * (phi.T * lam[None, :]) @ phi
        rows = rows @ step
    return out


def gaussian_limit_covariance(model, grid, t, y1, y2, panels=64, slices=8):
    if not 0 < t <= grid.T + 1e-12:
        raise ValueError("t must lie in (0, T], got {}".format(t))
    value = float(limit_covariance_matrix(model, grid, t, [y1, y2], panels, slices)[0, 1])
    logger.debug("%s limit covariance at t=%g, (%g, %g): %.6g", model.kind, t, y1, y2, value)
    return value
