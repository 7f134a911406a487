"""
Mild-form stepping of u^eps and of the fluctuation v^eps

Lie splitting on the mild form: each step adds the stochastic increment evaluated at the
pre-step state, then propagates by the exact lattice heat semigroup,

    u_{k+1} = P_dt (u_k + sqrt(eps) sum_j Gbar_j(y, u_k(y)) dW_{k,j})
    v_{k+1} = P_dt (v_k + a(eps) sum_j Gbar_j(y, (sqrt(eps)/a(eps)) v_k(y) + u^0_k(y)) dW_{k,j})

so v^eps is the exact centered rescaling of u^eps under the same noise.
"""
import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
from sklearn.isotonic import isotonic_regression

from graphs.grid import FieldPath
from graphs.models.heat import propagator
from graphs.models.population import deterministic_flow


PROJECTIONS = ("none", "clamp01", "monotone")
SCHEMES = ("mild-exponential",)


class SimulationError(RuntimeError):
    def __init__(self, message, frame_index):
        super().__init__("{} (frame {})".format(message, frame_index))
        self.frame_index = frame_index


@dataclass(frozen=True)
class SimScheme:
    projection: str = "none"
    na: Optional[int] = None
    scheme: str = "mild-exponential"

    def __post_init__(self):
        if self.projection not in PROJECTIONS:
            raise ValueError("projection must be one of {}, got {}".format(PROJECTIONS, self.projection))
        if self.scheme not in SCHEMES:
            raise ValueError("scheme must be one of {}, got {}".format(SCHEMES, self.scheme))
        if self.na is not None and self.na < 2:
            raise ValueError("na must be >= 2, got {}".format(self.na))

    @classmethod
    def default_for(cls, kind):
        return cls(projection="clamp01" if kind == "FVP" else "none")


class MildSPDE(nn.Module):
    """
    Batched stepping engine. mode="u" integrates u^eps, mode="v" the fluctuation v^eps
    around the deterministic flow u0.
    """
    def __init__(self, model, grid=None, scheme=None, mode="u", u0=None):
        super().__init__()
        self.logger = logging.getLogger("MildSPDE")
        grid = grid or model.grid
        if grid != model.grid:
            raise ValueError("the model's F lives on {}, simulation grid is {}".format(model.grid, grid))
        if mode not in ("u", "v"):
            raise ValueError("mode must be 'u' or 'v', got {}".format(mode))
        self.model = model
        self.grid = grid
        self.scheme = scheme or SimScheme.default_for(model.kind)
        if self.scheme.na is not None and self.scheme.na != model.mark_grid.na:
            raise ValueError("scheme na={} does not match the model's mark grid na={}".format(
                self.scheme.na, model.mark_grid.na))
        self.mode = mode
        self.step_op = propagator(grid, grid.dt, model.padding)

        if mode == "u":
            self.noise_scale = math.sqrt(model.epsilon)
            self.state_scale = 1.0
        else:
            self.noise_scale = model.a_eps
            self.state_scale = model.fluctuation_scale
            u0 = u0 if u0 is not None else deterministic_flow(model, grid)
            self.register_buffer("u0", torch.as_tensor(u0.frames, dtype=torch.float64))

        self.breaches = 0
        self.monotone_violation = 0.0

    def implied_u(self, state, k):
        if self.mode == "u":
            return state
        return self.state_scale * state + self.u0[k]

    def _project(self, state, k):
        projection = self.scheme.projection
        if projection == "none" or (self.mode == "v" and self.state_scale == 0):
            return state
        u = self.implied_u(state, k)
        if projection == "clamp01":
            u = u.clamp(0.0, 1.0)
        else:
            rows = u.detach().cpu().numpy()
            self.monotone_violation = max(self.monotone_violation,
                                          float(np.max(np.maximum(-np.diff(rows, axis=-1), 0.0))))
            u = torch.as_tensor(np.stack([isotonic_regression(row) for row in rows.reshape(-1, rows.shape[-1])])
                                .reshape(rows.shape), dtype=state.dtype, device=state.device)
        if self.mode == "u":
            return u
        return (u - self.u0[k]) / self.state_scale

    def forward(self, state, weights, k):
        """
        One step from t_k to t_{k+1}.
        :param state: (B, nx+1) tensor at t_k
        :param weights: (B, na) noise increments over [t_k, t_{k+1}]
        :return: state at t_{k+1}
        """
        out = state
        if self.noise_scale != 0:
            u = self.implied_u(state, k)
            if self.model.kind == "SBM":
                self.breaches += int((u.abs() > self.model.mark_grid.hi).sum())
            out = out + self.noise_scale * self.model.mark_integral(u, weights)
        out = self._project(self.step_op(out), k + 1)
        if not bool(torch.isfinite(out).all()):
            raise SimulationError("non-finite state in {} simulation".format(self.model.kind), k + 1)
        return out

    def integrate(self, noise_fn, batch, keep_path=True):
        """
        Runs all nt steps for a batch of replicates.
        :param noise_fn: k -> (batch, na) numpy array of increments for step k
        :return: (batch, nt+1, nx+1) numpy paths, or the (batch, nx+1) terminal frames
        """
        device = self.u0.device if self.mode == "v" else torch.device("cpu")
        n = self.grid.nx + 1
        if self.mode == "u":
            state = torch.as_tensor(self.model.F.values, dtype=torch.float64, device=device).expand(batch, n).clone()
        else:
            state = torch.zeros(batch, n, dtype=torch.float64, device=device)
        frames = [state.cpu().numpy()] if keep_path else None
        with torch.no_grad():
            for k in range(self.grid.nt):
                weights = torch.as_tensor(noise_fn(k), dtype=torch.float64, device=device)
                state = self(state, weights, k)
                if keep_path:
                    frames.append(state.cpu().numpy())
        if self.breaches:
            self.logger.warning("SBM mark truncation A=%.4g breached at %d node-steps", self.model.mark_grid.hi,
                                self.breaches)
        if self.monotone_violation > 0:
            self.logger.info("monotone projection removed decreases up to %.3g", self.monotone_violation)
        if keep_path:
            return np.stack(frames, axis=1)
        return state.cpu().numpy()


def _check_noise(model, grid, noise):
    expected = (grid.nt, model.mark_grid.na)
    if noise.increments.shape != expected:
        raise ValueError("noise has shape {}, grid and mark grid need {}".format(noise.increments.shape, expected))
    if noise.mark_grid != model.mark_grid:
        raise ValueError("noise was drawn on a different mark grid than the model's")


def simulate_u(model, grid, scheme, noise):
    _check_noise(model, grid, noise)
    engine = MildSPDE(model, grid, scheme, mode="u")
    paths = engine.integrate(lambda k: noise.increments[k][None, :], batch=1)
    return FieldPath(grid, paths[0])


def simulate_v(model, grid, scheme, noise, u0=None):
    _check_noise(model, grid, noise)
    engine = MildSPDE(model, grid, scheme, mode="v", u0=u0)
    paths = engine.integrate(lambda k: noise.increments[k][None, :], batch=1)
    return FieldPath(grid, paths[0])


def center_rescale(u, u0, epsilon, kappa):
    """(eps^kappa / sqrt(eps)) (u - u0), framewise."""
    if u.grid != u0.grid:
        raise ValueError("paths live on different grids: {} vs {}".format(u.grid, u0.grid))
    if epsilon <= 0:
        raise ValueError("epsilon must be positive, got {}".format(epsilon))
    return FieldPath(u.grid, epsilon ** (kappa - 0.5) * (u.frames - u0.frames))
