import math

import numpy as np
import pytest
import torch

from datasets.noise import MarkGrid, sample_white_noise
from datasets.presets import initial_condition
from graphs.grid import FieldPath, make_grid
from graphs.models.heat import heat_propagate
from graphs.models.population import deterministic_flow, make_fvp, make_sbm, make_white_noise_model
from graphs.models.spde import MildSPDE, SimScheme, SimulationError, center_rescale, simulate_u, simulate_v


class TestSimScheme:
    def test_defaults(self):
        assert SimScheme.default_for("FVP").projection == "clamp01"
        assert SimScheme.default_for("SBM").projection == "none"

    def test_invalid(self):
        with pytest.raises(ValueError):
            SimScheme(projection="clip")
        with pytest.raises(ValueError):
            SimScheme(na=1)
        with pytest.raises(ValueError):
            SimScheme(scheme="euler")


class TestSimulateU:
    def test_zero_epsilon_is_the_deterministic_flow(self, fvp):
        model = fvp.with_epsilon(0.0)
        noise = sample_white_noise(model.grid, model.mark_grid, 0, 0)
        u = simulate_u(model, model.grid, SimScheme(), noise)
        assert np.max(np.abs(u.frames - deterministic_flow(model).frames)) <= 1e-12

    def test_step_adds_the_increment_then_propagates(self, fvp):
        model = fvp.with_epsilon(1e-2)
        grid = model.grid
        noise = sample_white_noise(grid, model.mark_grid, 5, 0)
        u = simulate_u(model, grid, SimScheme(projection="none"), noise)
        F = torch.as_tensor(model.F.values)
        with torch.no_grad():
            increment = math.sqrt(model.epsilon) * model.mark_integral(F, torch.as_tensor(noise.increments[0]))
        expected = heat_propagate(model.F.values + increment.numpy(), grid.dt, grid, padding=model.padding).values
        assert np.max(np.abs(u.frames[1] - expected)) <= 1e-12
        added_after = heat_propagate(model.F, grid.dt, grid, padding=model.padding).values + increment.numpy()
        assert np.max(np.abs(u.frames[1] - added_after)) > 1e-8

    def test_fvp_clamp_keeps_the_range(self, fvp):
        model = fvp.with_epsilon(0.5)
        noise = sample_white_noise(model.grid, model.mark_grid, 1, 0)
        u = simulate_u(model, model.grid, SimScheme(projection="clamp01"), noise)
        assert u.frames.min() >= 0.0 and u.frames.max() <= 1.0

    def test_monotone_projection(self, sbm):
        model = sbm.with_epsilon(0.1)
        noise = sample_white_noise(model.grid, model.mark_grid, 2, 0)
        u = simulate_u(model, model.grid, SimScheme(projection="monotone"), noise)
        assert np.all(np.diff(u.frames, axis=1) >= -1e-12)

    def test_noise_mismatch(self, fvp, grid):
        other = sample_white_noise(grid, MarkGrid.uniform(0.0, 1.0, 8), 0, 0)
        with pytest.raises(ValueError):
            simulate_u(fvp, grid, SimScheme(), other)

    def test_non_finite_state_reports_frame(self, grid):
        model = make_white_noise_model(grid, sigma=1.0, epsilon=1e-3)
        engine = MildSPDE(model, grid, SimScheme(), mode="u")

        def noise(k):
            row = np.zeros((1, model.mark_grid.na))
            row[0, 3] = np.inf if k == 2 else 0.0
            return row

        with pytest.raises(SimulationError) as err:
            engine.integrate(noise, batch=1)
        assert err.value.frame_index == 3


class TestFluctuations:
    def test_center_rescale(self, grid):
        u0 = FieldPath(grid, np.random.default_rng(0).standard_normal((grid.nt + 1, grid.nx + 1)))
        assert np.all(center_rescale(u0, u0, 1e-4, 0.25).frames == 0)
        w = np.ones_like(u0.frames)
        scaled = center_rescale(FieldPath(grid, u0.frames + 0.5 * w), u0, 1e-4, 0.25)
        assert np.allclose(scaled.frames, 10.0 * 0.5)
        with pytest.raises(ValueError):
            center_rescale(u0, FieldPath.zeros(grid.refine()), 1e-4, 0.25)

    def test_v_matches_rescaled_u(self, fvp):
        model = fvp.with_epsilon(1e-4)
        grid = model.grid
        noise = sample_white_noise(grid, model.mark_grid, 11, 0)
        u0 = deterministic_flow(model)
        scheme = SimScheme(projection="none")
        u = simulate_u(model, grid, scheme, noise)
        v = simulate_v(model, grid, scheme, noise, u0=u0)
        gap = np.max(np.abs(center_rescale(u, u0, model.epsilon, model.kappa).frames - v.frames))
        assert gap <= 1e-8 * max(1.0, np.max(np.abs(v.frames)))

    def test_zero_coefficient_gives_zero_fluctuation(self, grid):
        model = make_white_noise_model(grid, sigma=0.0)
        noise = sample_white_noise(grid, model.mark_grid, 0, 0)
        v = simulate_v(model, grid, SimScheme(), noise)
        assert np.all(v.frames == 0)

    def test_batch_rows_are_independent_of_batch_size(self, sbm):
        grid = sbm.grid
        engine = MildSPDE(sbm, grid, SimScheme(), mode="v")
        rng = np.random.default_rng(3)
        rows = [rng.standard_normal((4, sbm.mark_grid.na)) * 0.01 for _ in range(grid.nt)]
        full = engine.integrate(lambda k: rows[k], batch=4)
        single = engine.integrate(lambda k: rows[k][1:2], batch=1)
        assert np.allclose(full[1], single[0], atol=1e-14)
        assert torch.is_tensor(engine.u0)
