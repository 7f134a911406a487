import math

import numpy as np
import pytest

from graphs.grid import (Field, FieldPath, WeightParams, heat_kernel, holder_metric, holder_seminorm,
                         initial_condition_constants, make_grid, weighted_sup_norm)


class TestGrid:
    def test_spacing(self):
        grid = make_grid(10.0, 256, 1.0, 100)
        assert grid.dx == pytest.approx(20.0 / 256)
        assert grid.dt == pytest.approx(0.01)
        assert grid.nodes[0] == -10.0 and grid.nodes[-1] == pytest.approx(10.0)
        assert grid.times[-1] == pytest.approx(1.0)

    @pytest.mark.parametrize("args", [(0.0, 16), (-1.0, 16), (4.0, 1), (4.0, 2.5)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            make_grid(*args)

    def test_node_index(self):
        grid = make_grid(4.0, 32, 1.0, 8)
        assert grid.node_index(0.0) == 16
        assert grid.time_index(0.5) == 4
        with pytest.raises(ValueError):
            grid.node_index(0.1)
        with pytest.raises(ValueError):
            grid.time_index(2.0)

    def test_refine_keeps_nodes(self):
        grid = make_grid(4.0, 32, 1.0, 8)
        fine = grid.refine(2)
        assert fine.nx == 64 and fine.nt == 16
        assert np.allclose(fine.nodes[::2], grid.nodes)


class TestFields:
    def test_field_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Field(np.array([0.0, np.nan]))

    def test_path_shape(self):
        grid = make_grid(4.0, 32, 1.0, 8)
        with pytest.raises(ValueError):
            FieldPath(grid, np.zeros((8, 33)))
        assert FieldPath.zeros(grid).weighted_sup_norm(1.0) == 0.0


class TestNorms:
    def test_heat_kernel_mass(self):
        grid = make_grid(10.0, 512, 1.0, 10)
        assert np.sum(heat_kernel(0.5, grid.nodes)) * grid.dx == pytest.approx(1.0, abs=1e-8)
        assert heat_kernel(1.0, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi))
        with pytest.raises(ValueError):
            heat_kernel(0.0, 1.0)

    def test_weighted_sup_norm(self):
        grid = make_grid(4.0, 32, 1.0, 8)
        assert weighted_sup_norm(np.ones(33), 1.0, grid.nodes) == pytest.approx(1.0)
        growth = np.exp(np.abs(grid.nodes))
        assert weighted_sup_norm(growth, 1.0, grid.nodes) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            weighted_sup_norm(growth, 0.0, grid.nodes)

    def test_holder_seminorm_of_linear_function(self):
        grid = make_grid(4.0, 32, 1.0, 8)
        # |y1 - y2|^(1 - alpha) is largest at the widest pair inside [-m, m]
        value = holder_seminorm(grid.nodes, grid.nodes, 0.5, 2)
        assert value == pytest.approx(4.0 ** 0.5)

    def test_holder_metric(self):
        grid = make_grid(6.0, 96, 1.0, 8)
        wp = WeightParams()
        u = np.sin(grid.nodes)
        v = np.cos(grid.nodes)
        assert holder_metric(u, u, wp, grid.nodes) == 0.0
        d = holder_metric(u, v, wp, grid.nodes)
        assert d == pytest.approx(holder_metric(v, u, wp, grid.nodes))
        assert 0.0 < d < 1.0
        with pytest.raises(ValueError):
            holder_metric(u, v, wp, grid.nodes, m_max=7)

    def test_weight_params(self):
        with pytest.raises(ValueError):
            WeightParams(beta=0.5, beta0=0.25, beta1=0.75)
        with pytest.raises(ValueError):
            WeightParams(alpha=0.5)

    def test_initial_condition_constants(self):
        grid = make_grid(4.0, 32, 1.0, 8)
        growth, holder = initial_condition_constants(np.full(33, 2.0), grid.nodes, WeightParams())
        assert growth == pytest.approx(2.0)
        assert holder == 0.0
