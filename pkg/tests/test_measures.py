import numpy as np
import pytest

from graphs.grid import FieldPath, make_grid
from graphs.measures import (SignedMeasurePath, field_to_measure, measure_to_field, pair, path_to_measure_path,
                             rho_beta, weighted_total_variation)


@pytest.fixture
def small_grid():
    return make_grid(4.0, 32, 1.0, 8)


class TestConversions:
    def test_field_measure_inverse(self, small_grid):
        u = np.tanh(small_grid.nodes)
        w = field_to_measure(u, small_grid)
        assert w.shape == (32,)
        assert np.allclose(measure_to_field(w, small_grid, u[0]), u)

    def test_path_round_trip(self, small_grid):
        frames = np.random.default_rng(0).standard_normal((9, 33))
        path = path_to_measure_path(FieldPath(small_grid, frames), beta=0.5)
        assert path.beta == 0.5
        assert np.allclose(path.to_field_path().frames, frames)

    def test_zero_mass_and_scaling(self, small_grid):
        densities = np.zeros((9, 32))
        densities[:, 10], densities[:, 20] = 1.0, -1.0
        path = SignedMeasurePath(small_grid, densities)
        assert path.has_zero_mass()
        assert np.allclose((2.0 * path).total_mass(), 0.0)
        assert np.array_equal((2.0 * path).densities, 2.0 * densities)
        with pytest.raises(ValueError):
            SignedMeasurePath(small_grid, np.zeros((8, 32)))

    def test_anchors(self, small_grid):
        densities = np.tile(np.exp(-small_grid.nodes[:-1] ** 2), (9, 1))
        zero_anchored = SignedMeasurePath(small_grid, densities, anchor="zero").to_field_path().frames
        assert np.allclose(zero_anchored[:, small_grid.node_index(0.0)], 0.0, atol=1e-12)
        assert np.all(SignedMeasurePath(small_grid, densities).to_field_path().frames[:, 0] == 0.0)
        with pytest.raises(ValueError):
            SignedMeasurePath(small_grid, densities, anchor="origin")

    def test_reanchoring_keeps_the_increments(self, small_grid):
        frames = np.tile(np.tanh(small_grid.nodes) + 2.0, (9, 1))
        path = path_to_measure_path(FieldPath(small_grid, frames), anchor="zero")
        assert np.allclose(path.to_field_path().frames, frames)
        assert np.allclose(path.to_field_path(anchored=True).frames, frames - 2.0)
        assert (3.0 * path).anchor == "zero"


class TestPairings:
    def test_pair_with_constant(self, small_grid):
        assert pair(np.ones(32), np.ones(33), small_grid) == pytest.approx(8.0)
        with pytest.raises(ValueError):
            pair(np.ones(32), np.ones(10), small_grid)

    def test_weighted_total_variation(self, small_grid):
        assert weighted_total_variation(-np.ones(32), 0.0, small_grid) == pytest.approx(8.0)
        assert weighted_total_variation(np.ones(32), 1.0, small_grid) < 8.0


class TestRhoBeta:
    def test_identical_measures(self, small_grid):
        mu = np.exp(-small_grid.nodes[:-1] ** 2)
        assert rho_beta(mu, mu, 1.0, small_grid) == 0.0

    def test_single_cell(self, small_grid):
        mu = np.zeros(32)
        mu[16] = 1.0 / small_grid.dx
        assert rho_beta(mu, np.zeros(32), 1.0, small_grid) == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_and_below_total_variation(self, small_grid):
        rng = np.random.default_rng(5)
        mu, nu = rng.random(32), rng.random(32)
        forward = rho_beta(mu, nu, 1.0, small_grid)
        assert forward == pytest.approx(rho_beta(nu, mu, 1.0, small_grid), abs=1e-8)
        assert 0.0 < forward <= weighted_total_variation(mu - nu, 1.0, small_grid) + 1e-8

    def test_lipschitz_constraint_binds(self, small_grid):
        # a unit dipole one cell apart: f can change by at most dx between the cells
        mu, nu = np.zeros(32), np.zeros(32)
        mu[16], nu[17] = 1.0 / small_grid.dx, 1.0 / small_grid.dx
        value = rho_beta(mu, nu, 1e-9, small_grid)
        assert value == pytest.approx(small_grid.dx, abs=1e-6)

    def test_eta_is_continuous_in_the_sup_norm(self, small_grid):
        nodes = small_grid.nodes
        u = np.tanh(nodes)
        bump = np.sin(3.0 * nodes) * np.exp(-nodes ** 2)
        bump[[0, -1]] = 0.0
        base = field_to_measure(u, small_grid)
        distances = [rho_beta(field_to_measure(u + h * bump, small_grid), base, 1.0, small_grid)
                     for h in (1e-1, 1e-2, 1e-3)]
        assert distances[0] > 0
        assert distances[1] == pytest.approx(0.1 * distances[0], rel=1e-4)
        assert distances[2] == pytest.approx(0.01 * distances[0], rel=1e-4)
        # summation by parts against |f| <= 1, |f'| <= 1
        bound = 2.0 * np.exp(small_grid.dx) * np.sum(np.exp(-np.abs(nodes)) * np.abs(0.1 * bump)) * small_grid.dx
        assert distances[0] <= bound
