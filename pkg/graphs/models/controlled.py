"""
The skeleton map gamma: control h on the (time, mark) lattice -> path v solving

    v_t(y) = int_0^t int_U G(a, y, u^0_s(y)) h_s(a) lambda(da) ds + int_0^t (1/2) Delta v_s(y) ds

stepped with the same splitting as the stochastic engine: add the forcing of step k, then
propagate, v_{k+1} = P_dt (v_k + f_k). gamma is linear in h; its adjoint comes from torch.autograd.
"""
import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from graphs.grid import FieldPath
from graphs.models.heat import propagator


@dataclass
class Control:
    values: np.ndarray
    mark_grid: object

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.mark_grid.na:
            raise ValueError("control has shape {}, expected (nt, {})".format(self.values.shape, self.mark_grid.na))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control values must be finite")

    @property
    def nt(self):
        return self.values.shape[0]

    def energy(self, T=1.0):
        """(1/2) sum_k sum_j h_kj^2 dt lambda_j, dt = T/nt."""
        return 0.5 * self.norm_squared(T)

    def norm_squared(self, T=1.0):
        dt = T / self.nt
        return float(np.sum(self.values ** 2 * self.mark_grid.lam[None, :]) * dt)

    def centered(self):
        """h minus its lambda-average over U, per time step."""
        lam = self.mark_grid.lam
        mean = (self.values @ lam) / lam.sum()
        return Control(self.values - mean[:, None], self.mark_grid)

    def __add__(self, other):
        return Control(self.values + other.values, self.mark_grid)

    def __mul__(self, c):
        return Control(c * self.values, self.mark_grid)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, nt, mark_grid):
        return cls(np.zeros((nt, mark_grid.na)), mark_grid)


class ControlledMap(nn.Module):
    """gamma restricted to the grid, acting on (nt, na) tensors of control values."""
    def __init__(self, model, u0, grid=None, mark_grid=None):
        super().__init__()
        self.logger = logging.getLogger("ControlledMap")
        self.grid = grid or model.grid
        if u0.grid != self.grid:
            raise ValueError("u0 lives on {}, expected {}".format(u0.grid, self.grid))
        self.model = model
        self.mark_grid = mark_grid or model.mark_grid
        if self.mark_grid != model.mark_grid:
            raise ValueError("controls must live on the model's mark grid")
        self.step_op = propagator(self.grid, self.grid.dt, model.padding)
        self.register_buffer("u0", torch.as_tensor(u0.frames[:-1], dtype=torch.float64))
        self.register_buffer("cell_dt", torch.as_tensor(self.mark_grid.lam * self.grid.dt, dtype=torch.float64))

    @property
    def control_shape(self):
        return self.grid.nt, self.mark_grid.na

    def forcing(self, h):
        """(nt, nx+1) forcing f_k(y) = sum_j Gbar_j(y, u0_k(y)) h_kj lambda_j dt."""
        return self.model.mark_integral(self.u0, h * self.cell_dt)

    def forward(self, h):
        """
        :param h: (nt, na) tensor
        :return: (nt+1, nx+1) tensor of v frames, v_0 = 0
        """
        if tuple(h.shape) != self.control_shape:
            raise ValueError("control has shape {}, expected {}".format(tuple(h.shape), self.control_shape))
        forcing = self.forcing(h)
        frames = [torch.zeros_like(forcing[0])]
        for k in range(self.grid.nt):
            frames.append(self.step_op(frames[-1] + forcing[k]))
        return torch.stack(frames)

    def adjoint(self, r):
        """gamma^T r for a (nt+1, nx+1) tensor r, via reverse-mode differentiation."""
        h = torch.zeros(self.control_shape, dtype=torch.float64, device=r.device, requires_grad=True)
        with torch.enable_grad():
            (grad,) = torch.autograd.grad((self(h) * r).sum(), h)
        return grad


def solve_controlled(h, model, u0, grid=None):
    """gamma(h) as a FieldPath."""
    gamma = ControlledMap(model, u0, grid, h.mark_grid)
    if h.nt != gamma.grid.nt:
        raise ValueError("control has {} steps, grid has {}".format(h.nt, gamma.grid.nt))
    with torch.no_grad():
        frames = gamma(torch.as_tensor(h.values))
    return FieldPath(gamma.grid, frames.numpy())
