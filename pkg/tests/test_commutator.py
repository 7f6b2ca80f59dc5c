import numpy as np
import pytest
from _oracles import bump_density
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from stochtransport.commutator import (
    CommutatorStudy,
    compute_commutator,
    convergence_study,
    gaussian_profile,
    indicator_profile,
    l1loc_norm,
    smoothed_grid_function,
)
from stochtransport.errors import UnresolvedMollifier
from stochtransport.field import (
    MollifierFamily,
    ScalarField,
    drift_from_id,
    initial_from_id,
)


def quad_commutator(f, g, eps, x):
    """``int rho_eps(x - z) (f(x) - f(z)) g'(z) dz`` by adaptive quadrature, split at 0."""
    fx = float(f.evaluate(0.0, np.array([x]))[0, 0])

    def integrand(z):
        fz = float(f.evaluate(0.0, np.array([z]))[0, 0])
        return bump_density(x - z, eps) * (fx - fz) * float(g.grad(np.array([z]))[0, 0])

    lo, hi = x - eps, x + eps
    pts = [p for p in (0.0,) if lo < p < hi]
    return integrate.quad(integrand, lo, hi, points=pts or None, epsabs=1e-13, limit=200)[0]


def test_sign_against_adaptive_quadrature():
    f, g = drift_from_id("sign"), gaussian_profile()
    x = np.linspace(-0.2, 0.2, 41)
    R = compute_commutator(f, g, MollifierFamily("bump", 0.1), x)
    ref = np.array([quad_commutator(f, g, 0.1, xi) for xi in x])
    np.testing.assert_allclose(R, ref, atol=1e-9)
    assert np.all(R[np.abs(x) >= 0.1] == pytest.approx(0.0, abs=1e-14))


def test_constant_field_has_zero_commutator():
    x = np.linspace(-1, 1, 201)
    R = compute_commutator(drift_from_id("const:0.7"), gaussian_profile(), MollifierFamily("gauss", 0.1), x)
    assert np.max(np.abs(R)) < 1e-14


def _combo(a, g1, b, g2):
    return ScalarField("combo", 1, lambda x: a * g1.evaluate(x) + b * g2.evaluate(x), 3.0, abs(a) + abs(b),
                       gradient=lambda x: a * g1.grad(x) + b * g2.grad(x))


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_commutator_is_linear_in_g(a, b):
    g1, g2 = gaussian_profile(0.3, 0.2), gaussian_profile(-0.4, 0.1)
    f, rho = drift_from_id("ou"), MollifierFamily("bump", 0.1)
    x = np.linspace(-1, 1, 81)
    lhs = compute_commutator(f, _combo(a, g1, b, g2), rho, x)
    rhs = a * compute_commutator(f, g1, rho, x) + b * compute_commutator(f, g2, rho, x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)))


def test_unresolved_mollifier_is_rejected():
    x = np.linspace(-1, 1, 201)  # spacing 0.01
    with pytest.raises(UnresolvedMollifier):
        compute_commutator(drift_from_id("ou"), gaussian_profile(), MollifierFamily("bump", 0.03), x)
    with pytest.raises(UnresolvedMollifier):
        compute_commutator(drift_from_id("ou"), initial_from_id("step"), MollifierFamily("bump", 0.1), x)
    coarse = smoothed_grid_function(np.linspace(-1, 1, 21), np.zeros(21), 0.1)  # data spacing 0.1
    with pytest.raises(UnresolvedMollifier):
        compute_commutator(drift_from_id("ou"), coarse, MollifierFamily("bump", 0.2), x)


def test_smoothed_grid_function_gradient():
    x = np.linspace(-1, 1, 41)
    lin = smoothed_grid_function(x, 2 * x, 0.05)
    z = np.linspace(-0.8, 0.8, 33)
    np.testing.assert_allclose(lin.grad(z)[:, 0], 2.0, atol=1e-12)
    ind = indicator_profile(0.0, 0.5, 0.02)
    z = np.linspace(-0.2, 0.25, 4501)
    total = np.sum(0.5 * (ind.grad(z[1:])[:, 0] + ind.grad(z[:-1])[:, 0]) * np.diff(z))
    assert total == pytest.approx(1.0, abs=1e-4)


def test_l1loc_norm():
    x = np.linspace(-1, 1, 201)
    assert l1loc_norm(np.abs(x), x) == pytest.approx(1.0, abs=1e-4)
    assert l1loc_norm(np.ones_like(x), x, (0.0, 0.5)) == pytest.approx(0.5)
    assert l1loc_norm(np.ones_like(x), x) == pytest.approx(2.0)
    assert l1loc_norm(np.zeros_like(x), x) == 0.0
    assert l1loc_norm(np.ones(1), np.zeros(1)) == 0.0


def test_study_validation():
    with pytest.raises(ValueError):
        CommutatorStudy(drift_from_id("ou"), gaussian_profile(), ladder=(0.1, 0.2))
    with pytest.raises(ValueError):
        CommutatorStudy(drift_from_id("ou"), gaussian_profile(), K=(-2.9, 1.0))


def test_commutator_vanishes_for_lipschitz_field_and_h1_profile():
    res = convergence_study(CommutatorStudy(drift_from_id("ou"), gaussian_profile(), "gauss", spacing=0.005))
    assert res.finite and res.halving
    assert all(r < 0.6 for r in res.ratios)


def test_commutator_persists_when_jumps_coincide():
    res = convergence_study(CommutatorStudy(drift_from_id("sign"), lambda e: indicator_profile(0.0, 0.5, e / 8),
                                            "bump", spacing=0.005))
    assert res.finite and not res.halving


def test_constant_profile_has_zero_commutator():
    flat = ScalarField("flat", 1, lambda x: np.full(x.shape[:-1], 2.0), 3.0, 2.0,
                       gradient=lambda x: np.zeros(x.shape))
    R = compute_commutator(drift_from_id("sign"), flat, MollifierFamily("bump", 0.1), np.linspace(-1, 1, 101))
    assert np.all(R == 0.0)


def test_sign_field_with_h1_profile_decreases_down_the_ladder():
    res = convergence_study(CommutatorStudy(drift_from_id("sign"), gaussian_profile(), "bump", spacing=0.005))
    assert all(r < 1 for r in res.ratios) and res.norms[0] > 0
