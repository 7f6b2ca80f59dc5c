import numpy as np
import pytest

from stochtransport.errors import GridMismatch
from stochtransport.grid import SpaceTimeGrid, check_same_grid


def test_spacings_and_nodes():
    g = SpaceTimeGrid(3.0, 7, 8, 1.0)
    assert g.dx == pytest.approx(1.0)
    assert g.dt == pytest.approx(0.125)
    np.testing.assert_allclose(g.x, np.arange(-3.0, 4.0))
    assert g.times[-1] == 1.0 and g.times.size == 9


def test_trapezoid_integrates_linear_exactly_and_quadratic_to_second_order():
    g = SpaceTimeGrid(1.0, 201, 4, 1.0)
    assert g.integrate(g.x + 2.0) == pytest.approx(4.0, abs=1e-12)
    assert g.integrate(g.x ** 2) == pytest.approx(2 / 3, abs=g.dx ** 2)


def test_two_dimensional_quadrature():
    g = SpaceTimeGrid(1.0, 41, 4, 1.0, d=2)
    assert g.shape == (41, 41)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4.0)


def test_snapshot_indices_cover_both_ends():
    g = SpaceTimeGrid(1.0, 5, 512, 1.0)
    s = g.snapshot_indices(4)
    assert s[0] == 0 and s[-1] == 512 and len(s) == 5


def test_grid_mismatch_raises():
    a = SpaceTimeGrid(1.0, 5, 8, 1.0)
    check_same_grid(a, a.with_())
    with pytest.raises(GridMismatch):
        check_same_grid(a, a.with_(K=16))
