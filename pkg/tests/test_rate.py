import numpy as np
import pytest

from agents.checks import coarse_rate_model, smooth_control
from datasets.noise import MarkGrid
from datasets.presets import initial_condition
from graphs.grid import Field, FieldPath, make_grid
from graphs.losses.rate import (cameron_martin_check, change_of_variables_check, drift_density, rate_fvp,
                                rate_general, rate_point_constraint, rate_sbm, rn_derivative,
                                within_witness_bound)
from graphs.measures import SignedMeasurePath, field_to_measure, path_to_measure_path
from graphs.models.controlled import Control, solve_controlled
from graphs.models.population import deterministic_flow, make_sbm


@pytest.fixture
def lebesgue():
    grid = make_grid(4.0, 32, 1.0, 8)
    model = make_sbm(grid, initial_condition("lebesgue-cdf", "SBM", grid), A=5.0, na=32)
    u0 = deterministic_flow(model)
    # omega_t = t mu^0
    omega = path_to_measure_path(FieldPath(grid, grid.times[:, None] * grid.nodes[None, :]))
    return model, u0, omega


class TestRateGeneral:
    def test_zero_target(self):
        model = coarse_rate_model("FVP", na=32)
        u0 = deterministic_flow(model)
        report = rate_general(FieldPath.zeros(model.grid), model, u0)
        assert report.value == 0.0 and not report.infinite
        assert np.all(report.minimizer.values == 0)

    def test_needs_zero_start(self):
        model = coarse_rate_model("FVP", na=32)
        u0 = deterministic_flow(model)
        with pytest.raises(ValueError):
            rate_general(FieldPath(model.grid, np.ones((9, 33))), model, u0)

    @pytest.mark.parametrize("kind", ["SBM", "FVP"])
    def test_witness_bounds_the_rate(self, kind):
        model = coarse_rate_model(kind, na=32)
        u0 = deterministic_flow(model)
        h = smooth_control(model.grid, model.mark_grid, np.random.default_rng(4))
        v = solve_controlled(h, model, u0)
        report = rate_general(v, model, u0)
        assert not report.infinite
        assert within_witness_bound(report.value, h.energy())
        assert report.residual <= 1e-6 * (1 + np.linalg.norm(v.frames))
        assert report.minimizer.energy() == pytest.approx(report.value, rel=1e-9)

    @pytest.mark.parametrize("kind", ["SBM", "FVP"])
    def test_witness_bound_on_the_coarsest_marks(self, kind):
        model = coarse_rate_model(kind, na=8)
        u0 = deterministic_flow(model)
        rng = np.random.default_rng(0)
        for _ in range(5):
            h = smooth_control(model.grid, model.mark_grid, rng)
            report = rate_general(solve_controlled(h, model, u0), model, u0)
            assert not report.infinite
            assert within_witness_bound(report.value, h.energy())

    def test_quadratic_scaling(self):
        model = coarse_rate_model("FVP", na=32)
        u0 = deterministic_flow(model)
        v = solve_controlled(smooth_control(model.grid, model.mark_grid, np.random.default_rng(5)), model, u0)
        base = rate_general(v, model, u0).value
        scaled = rate_general(FieldPath(model.grid, 3.0 * v.frames), model, u0).value
        assert scaled == pytest.approx(9.0 * base, rel=1e-6)

    def test_unattainable_target_is_infinite(self):
        model = coarse_rate_model("SBM", na=32)
        u0 = deterministic_flow(model)
        # u^0 vanishes at y = 0 at every step; v_2 = P(v_1 + f_1) = 0 then forces v_1(0) = -f_1(0) = 0
        frames = np.zeros((9, 33))
        frames[1, model.grid.node_index(0.0)] = 1.0
        report = rate_general(FieldPath(model.grid, frames), model, u0, iter_lim=200)
        assert report.infinite

    def test_point_constraint_is_quadratic(self):
        model = coarse_rate_model("FVP", na=32)
        u0 = deterministic_flow(model)
        one = rate_point_constraint(model, u0, 16, 1.0)
        two = rate_point_constraint(model, u0, 16, 2.0)
        assert one.value > 0
        assert two.value == pytest.approx(4.0 * one.value, rel=1e-8)
        with pytest.raises(ValueError):
            rate_point_constraint(model, u0, 16, 1.0, t_index=0)


class TestClosedForms:
    def test_lebesgue_derivative_is_one(self, lebesgue):
        model, u0, omega = lebesgue
        mu0 = path_to_measure_path(u0)
        for laplacian in ("semigroup", "central"):
            rn = rn_derivative(omega, mu0, laplacian=laplacian)
            assert np.allclose(rn.values, 1.0, atol=1e-9)
            assert rn.defect == 0.0

    def test_zero_path(self, lebesgue):
        model, u0, omega = lebesgue
        mu0 = path_to_measure_path(u0)
        zero = 0.0 * omega
        assert rate_sbm(zero, mu0).value == 0.0
        assert np.all(drift_density(zero) == 0)

    def test_quadratic(self, lebesgue):
        model, u0, omega = lebesgue
        mu0 = path_to_measure_path(u0)
        assert rate_sbm(2.0 * omega, mu0).value == pytest.approx(4.0 * rate_sbm(omega, mu0).value, rel=1e-12)
        # (1/2) int_0^1 int_{-L}^{L} 1 dy dt
        assert rate_sbm(omega, mu0).value == pytest.approx(4.0, rel=1e-9)

    def test_support_defect_is_infinite(self):
        grid = make_grid(4.0, 32, 1.0, 8)
        inside = (np.abs(grid.nodes[:-1]) < 1.0).astype(np.float64)
        mu0 = SignedMeasurePath(grid, np.tile(inside, (9, 1)))
        omega = SignedMeasurePath(grid, grid.times[:, None] * (1.0 - inside)[None, :])
        rn = rn_derivative(omega, mu0)
        assert rn.defect > 0
        assert rate_sbm(omega, mu0).infinite
        assert not cameron_martin_check(omega, mu0, "SBM").abs_cont_measure

    def test_cameron_martin_report(self, lebesgue):
        model, u0, omega = lebesgue
        report = cameron_martin_check(omega, path_to_measure_path(u0), "SBM")
        assert report.starts_at_zero and report.abs_cont_measure and report.passed
        assert report.energy == pytest.approx(rate_sbm(omega, path_to_measure_path(u0)).value)
        assert report.centered is None

    def test_fvp_rate_ignores_the_mark_average(self):
        model = coarse_rate_model("FVP", na=32)
        u0 = deterministic_flow(model)
        mu0 = path_to_measure_path(u0)
        h = smooth_control(model.grid, model.mark_grid, np.random.default_rng(7)) + Control(
            np.full((8, 32), 1.5), model.mark_grid)
        v, v_centered = solve_controlled(h, model, u0), solve_controlled(h.centered(), model, u0)
        assert np.max(np.abs(v.frames - v_centered.frames)) <= 1e-12
        rate = rate_fvp(path_to_measure_path(v), mu0).value
        assert rate == pytest.approx(rate_fvp(path_to_measure_path(v_centered), mu0).value, rel=1e-9)
        assert h.centered().energy() < h.energy()

    @pytest.mark.parametrize("kind", ["SBM", "FVP"])
    def test_equivalence_with_the_variational_rate(self, kind):
        model = coarse_rate_model(kind, na=64)
        u0 = deterministic_flow(model)
        h = smooth_control(model.grid, model.mark_grid, np.random.default_rng(6))
        v = solve_controlled(h, model, u0)
        general = rate_general(v, model, u0).value
        closed_form = rate_sbm if kind == "SBM" else rate_fvp
        closed = closed_form(path_to_measure_path(v), path_to_measure_path(u0)).value
        assert closed == pytest.approx(general, rel=0.02)


class TestChangeOfVariables:
    def test_gaussian_constant(self):
        grid = make_grid(8.0, 512, 1.0, 2)
        u0 = initial_condition("gaussian-cdf", "FVP", grid)
        marks = MarkGrid.uniform(0.0, 1.0, 256)
        residual = change_of_variables_check(np.ones_like, u0, field_to_measure(u0, grid), grid, marks)
        assert residual <= 1e-4

    def test_piecewise_constant_is_exact(self):
        grid = make_grid(1.0, 512, 1.0, 2)
        u0 = initial_condition("uniform01-cdf", "FVP", grid)
        marks = MarkGrid.uniform(0.0, 1.0, 16)
        h = np.random.default_rng(0).standard_normal(16)
        residual = change_of_variables_check(h, u0, field_to_measure(u0, grid), grid, marks)
        assert residual <= 1e-12

    def test_validation(self):
        grid = make_grid(1.0, 8, 1.0, 2)
        marks = MarkGrid.uniform(0.0, 1.0, 4)
        with pytest.raises(ValueError):
            change_of_variables_check(np.ones_like, Field(-grid.nodes), np.ones(8), grid, marks)
        with pytest.raises(ValueError):
            change_of_variables_check(np.ones_like, Field(grid.nodes), np.ones(8), grid, None)
