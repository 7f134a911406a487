import numpy as np
import pytest
import torch
from scipy.stats import norm

from datasets.noise import MarkGrid
from datasets.presets import initial_condition
from graphs.grid import Field, make_grid
from graphs.models.population import (ModelSpec, check_conditions, deterministic_flow, evaluate_G, g_l2_bound,
                                      g_l2_modulus, make_custom, make_fvp, make_sbm, make_white_noise_model,
                                      noise_covariance)


class TestCoefficients:
    def test_sbm_indicator(self, sbm):
        assert evaluate_G(sbm, 0.5, 0.0, 1.0) == 1.0
        assert evaluate_G(sbm, -0.5, 0.0, -1.0) == 1.0
        assert evaluate_G(sbm, 0.5, 0.0, -1.0) == 0.0

    def test_fvp_centered_indicator(self, fvp):
        assert evaluate_G(fvp, 0.3, 0.0, 0.5) == pytest.approx(0.5)
        assert evaluate_G(fvp, 0.7, 0.0, 0.5) == pytest.approx(-0.5)

    def test_moduli(self, sbm, fvp):
        assert g_l2_modulus(sbm, 0.0, 0.3, 0.7) == pytest.approx(0.4)
        assert g_l2_modulus(fvp, 0.0, 0.3, 0.7) == pytest.approx(0.24)
        assert g_l2_bound(fvp, 0.0, 0.5) == 0.25

    def test_sbm_bound_within_truncation(self, grid):
        model = make_sbm(grid, initial_condition("gaussian-cdf", "SBM", grid), A=3.0)
        assert g_l2_bound(model, 0.0, 2.0) == pytest.approx(2.0)

    def test_noise_covariance(self, sbm, fvp):
        assert noise_covariance(sbm, 0.3, 0.7) == pytest.approx(0.3)
        assert noise_covariance(sbm, -0.3, 0.7) == 0.0
        assert noise_covariance(fvp, 0.3, 0.7) == pytest.approx(0.09)

    def test_conditions(self, sbm, fvp):
        report = check_conditions(sbm, 2000, seed=1)
        assert report.passed
        assert report.max_modulus_ratio == pytest.approx(1.0, abs=1e-12)
        assert check_conditions(fvp, 2000, seed=1).max_modulus_ratio <= 1.0


class TestMarkIntegral:
    def test_sbm_against_lambda(self, sbm):
        u = torch.linspace(-1.0, 1.0, 21, dtype=torch.float64)
        lam = torch.as_tensor(sbm.mark_grid.lam)
        assert torch.allclose(sbm.mark_integral(u, lam), u.abs(), atol=1e-12)

    def test_fvp_integrates_to_zero(self, fvp):
        u = torch.linspace(0.0, 1.0, 11, dtype=torch.float64)
        lam = torch.as_tensor(fvp.mark_grid.lam)
        assert torch.allclose(fvp.mark_integral(u, lam), torch.zeros_like(u), atol=1e-12)

    def test_batch_broadcast(self, fvp):
        u = torch.full((5,), 0.4, dtype=torch.float64)
        weights = torch.randn(3, fvp.mark_grid.na, dtype=torch.float64)
        out = fvp.mark_integral(u, weights)
        assert out.shape == (3, 5)
        assert torch.allclose(out[1], fvp.mark_integral(u, weights[1]))

    def test_custom_callable(self, grid):
        marks = MarkGrid.uniform(0.0, 1.0, 4)

        def G(a, y, u):
            return torch.ones(u.shape[0], u.shape[1], a.shape[0], dtype=u.dtype)

        model = make_custom(grid, Field(np.zeros(grid.nx + 1)), G, marks)
        weights = torch.tensor([1.0, 2.0, 3.0, 4.0], dtype=torch.float64)
        out = model.mark_integral(torch.zeros(grid.nx + 1, dtype=torch.float64), weights)
        assert torch.allclose(out, torch.full_like(out, 10.0))

    def test_white_model(self, grid):
        model = make_white_noise_model(grid, sigma=2.0)
        weights = torch.ones(grid.nx + 1, dtype=torch.float64)
        out = model.mark_integral(torch.zeros(grid.nx + 1, dtype=torch.float64), weights)
        assert torch.allclose(out, torch.full_like(out, 2.0 / grid.dx))
        assert model.white_sigma == 2.0


class TestModelSpec:
    def test_scales(self, fvp):
        model = fvp.with_epsilon(1e-4)
        assert model.a_eps == pytest.approx(0.1)
        assert model.fluctuation_scale == pytest.approx(1e-4 ** 0.25)
        assert fvp.epsilon == 1e-3

    def test_validation(self, grid):
        F = initial_condition("gaussian-cdf", "FVP", grid)
        with pytest.raises(ValueError):
            make_fvp(grid, F, kappa=0.5)
        with pytest.raises(ValueError):
            make_fvp(grid, Field(F.values[::-1].copy()))
        with pytest.raises(ValueError):
            make_sbm(grid, Field(initial_condition("gaussian-cdf", "SBM", grid).values + 0.1))
        with pytest.raises(ValueError):
            make_sbm(grid, initial_condition("gaussian-cdf", "SBM", grid), A=0.1)
        with pytest.raises(ValueError):
            ModelSpec("Custom", grid, F, MarkGrid.uniform(0.0, 1.0, 4))


class TestDeterministicFlow:
    def test_lebesgue_is_invariant(self):
        grid = make_grid(8.0, 64, 1.0, 16)
        model = make_sbm(grid, initial_condition("lebesgue-cdf", "SBM", grid), A=9.0)
        flow = deterministic_flow(model)
        assert np.max(np.abs(flow.frames - grid.nodes[None, :])) <= 1e-6

    def test_fvp_flow(self, fvp):
        flow = deterministic_flow(fvp)
        assert np.array_equal(flow.frames[0], fvp.F.values)
        assert flow.frames.min() >= -1e-12 and flow.frames.max() <= 1 + 1e-12

    def test_fvp_point_mass_flows_into_the_gaussian_cdf(self):
        grid = make_grid(8.0, 256, 1.0, 16)
        model = make_fvp(grid, initial_condition("point-mass-cdf", "FVP", grid))
        flow = deterministic_flow(model)
        # the jump sits between the nodes -dx and 0
        for k in (4, 16):
            t = grid.times[k]
            expected = norm.cdf((grid.nodes + 0.5 * grid.dx) / np.sqrt(t))
            assert np.max(np.abs(flow.frames[k] - expected)) <= 2e-3

    @pytest.mark.parametrize("kind, preset", [("FVP", "point-mass-cdf"), ("FVP", "gaussian-cdf"),
                                              ("SBM", "point-mass-cdf"), ("SBM", "uniform01-cdf")])
    def test_flow_keeps_monotonicity(self, kind, preset):
        grid = make_grid(8.0, 128, 1.0, 16)
        F = initial_condition(preset, kind, grid)
        model = make_fvp(grid, F) if kind == "FVP" else make_sbm(grid, F)
        flow = deterministic_flow(model)
        assert np.min(np.diff(flow.frames, axis=1)) >= -1e-12

    def test_anchor_follows_the_kind(self, sbm, fvp):
        assert sbm.anchor == "zero"
        assert fvp.anchor == "minus-infinity"
