import math

import numpy as np
import pytest
from _oracles import bump_density
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from stochtransport.errors import InvalidField, InvalidMollifier
from stochtransport.field import (
    Divergence,
    MollifierFamily,
    ScalarField,
    VectorField,
    builtin_examples,
    drift_from_id,
    drift_ids,
    initial_from_id,
    initial_ids,
    mollify_field,
    mollify_initial,
    validate_hypothesis,
)


@pytest.mark.parametrize("kind", ["bump", "gauss"])
@pytest.mark.parametrize("dim", [1, 2])
def test_mollifier_has_unit_mass(kind, dim):
    assert MollifierFamily(kind, 0.07, dim).mass() == pytest.approx(1.0, abs=1e-8)


@given(eps=st.floats(0.01, 0.5), y=st.floats(-1.0, 1.0), kind=st.sampled_from(["bump", "gauss"]))
def test_mollifier_is_positive_symmetric_and_compact(eps, y, kind):
    rho = MollifierFamily(kind, eps)
    a, b = float(rho(np.array([y]))[0]), float(rho(np.array([-y]))[0])
    assert a >= 0 and a == b
    if abs(y) > eps:
        assert a == 0.0


def test_bump_matches_independent_density():
    rho = MollifierFamily("bump", 0.2)
    for s in (-0.15, 0.0, 0.05, 0.19):
        assert float(rho(np.array([s]))[0]) == pytest.approx(bump_density(s, 0.2), rel=1e-10)


def test_invalid_mollifier():
    with pytest.raises(InvalidMollifier):
        MollifierFamily("box", 0.1)
    with pytest.raises(InvalidMollifier):
        MollifierFamily("bump", -1.0)
    with pytest.raises(InvalidMollifier):
        mollify_field(drift_from_id("sign"), MollifierFamily("bump", 1.0))


def test_mollified_sign_matches_adaptive_quadrature():
    eps = 0.1
    b = mollify_field(drift_from_id("sign"), MollifierFamily("bump", eps))
    for x in (-0.07, -0.01, 0.0, 0.03, 0.05, 0.09):
        lo = integrate.quad(lambda z, x=x: bump_density(x - z, eps), x - eps, min(0.0, x + eps), epsabs=1e-13)[0] \
            if x - eps < 0 else 0.0
        hi = integrate.quad(lambda z, x=x: bump_density(x - z, eps), max(0.0, x - eps), x + eps, epsabs=1e-13)[0] \
            if x + eps > 0 else 0.0
        assert float(b.evaluate(0.0, np.array([x]))[0, 0]) == pytest.approx(hi - lo, abs=1e-9)


@pytest.mark.parametrize("did", ["ou", "sign", "antisign", "sqrtsign"])
def test_mollification_contracts_sup_norm(did):
    b = drift_from_id(did)
    x = np.linspace(-3, 3, 1201)
    sup = np.max(np.abs(b.evaluate(0.0, x)))
    for eps in (0.2, 0.05):
        be = mollify_field(b, MollifierFamily("bump", eps))
        # quadrature mass error of the mollifier is below 1e-8
        assert np.max(np.abs(be.evaluate(0.0, x))) <= sup + 1e-8


def test_mollification_converges_monotonically_for_continuous_drift():
    b = drift_from_id("ou")
    x = np.linspace(-2, 2, 801)
    ref = b.evaluate(0.0, x)
    errs = [np.max(np.abs(mollify_field(b, MollifierFamily("bump", e)).evaluate(0.0, x) - ref))
            for e in (0.2, 0.1, 0.05, 0.025)]
    assert all(b_ < a for a, b_ in zip(errs, errs[1:]))


@pytest.mark.parametrize("field_kind", ["drift", "datum"])
def test_odd_functions_stay_odd(field_kind):
    rho = MollifierFamily("gauss", 0.1)
    if field_kind == "drift":
        value = mollify_field(drift_from_id("sign"), rho).evaluate(0.0, np.array([0.0]))[0, 0]
    else:
        value = mollify_initial(initial_from_id("odd"), rho).evaluate(np.array([0.0]))[0]
    assert abs(value) < 1e-12


def test_mollified_initial_gradient_matches_finite_difference():
    u = mollify_initial(initial_from_id("bump"), MollifierFamily("bump", 0.1))
    x = np.array([-0.3, 0.1, 0.45])
    h = 1e-5
    fd = (u.evaluate(x + h) - u.evaluate(x - h)) / (2 * h)
    np.testing.assert_allclose(u.grad(x)[:, 0], fd, atol=1e-6)


def test_catalog_sizes_and_round_trip():
    assert len(drift_ids()) >= 6
    for did in drift_ids():
        b = drift_from_id(did)
        assert b.name.startswith(did)
    for uid in initial_ids():
        assert initial_from_id(uid).name == uid
    assert set(builtin_examples()) == set(drift_ids())
    assert drift_from_id("const:0.25").evaluate(0.0, np.array([0.0]))[0, 0] == 0.25
    with pytest.raises(KeyError):
        drift_from_id("vortex")
    with pytest.raises(KeyError):
        drift_from_id("ou:3")


@settings(max_examples=25)
@given(did=st.sampled_from(["zero", "ou", "sign", "antisign", "sqrtsign"]),
       x=st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=20))
def test_catalog_drifts_respect_their_sup_bound(did, x):
    b = drift_from_id(did)
    v = b.evaluate(0.0, np.array(x))
    assert np.all(np.isfinite(v)) and np.all(np.abs(v) <= b.sup_bound + 1e-12)


def test_hypothesis_report_flags():
    rep = validate_hypothesis(drift_from_id("ou"), initial_from_id("bump"), 1.0)
    assert rep.con1_ok and rep.con2_ok and rep.conIC_ok
    # OU: |div b| = 1 on |x| < 0.75, then the ramp to 1.5 has slope 0.75 / 0.75
    assert rep.div_l1 == pytest.approx(2 * 0.75 + 2 * 0.75, rel=1e-6)
    sign = validate_hypothesis(drift_from_id("sign"), initial_from_id("step"), 1.0)
    assert not sign.con2_ok and sign.divergence_kind == "distributional" and sign.atoms == ((0.0, 2.0),)
    sq = validate_hypothesis(drift_from_id("sqrtsign"), initial_from_id("bump"), 1.0, compact_half_width=0.5)
    assert sq.con2_ok and math.isfinite(sq.div_l1)


def test_bump_datum_l2_norm_matches_quadrature():
    u = initial_from_id("bump")
    rep = validate_hypothesis(drift_from_id("zero"), u, 1.0)
    ref = math.sqrt(integrate.quad(lambda s: float(u.evaluate(np.array([s]))[0]) ** 2, -0.5, 0.5,
                                   epsabs=1e-13)[0])
    assert rep.u0_l2 == pytest.approx(ref, rel=1e-8)


def test_non_finite_field_is_rejected():
    bad = VectorField("bad", 1, lambda t, x: np.where(x > 0, np.inf, 0.0), 3.0, 1.0,
                      Divergence("stencil"))
    with pytest.raises(InvalidField):
        validate_hypothesis(bad, initial_from_id("bump"), 1.0)
    nan_u = ScalarField("nan", 1, lambda x: np.full(x.shape[:-1], np.nan), 3.0, 1.0)
    with pytest.raises(InvalidField):
        nan_u.evaluate(np.array([0.0]))


def test_distributional_divergence_has_no_pointwise_value():
    with pytest.raises(InvalidField):
        drift_from_id("sign").div(0.0, np.array([0.1]))


def test_truncated_linear_drift_divergence_integral():
    # b = -x on |x| <= 1, zero outside: int_0^T int |div b| = 2T
    b = VectorField("cut-linear", 1, lambda t, x: np.where(np.abs(x) <= 1, -x, 0.0), 3.0, 1.0,
                    Divergence("analytic", lambda t, x: np.where(np.abs(x[..., 0]) <= 1, -1.0, 0.0)),
                    breakpoints=((-1.0, 1.0),))
    rep = validate_hypothesis(b, initial_from_id("gauss"), 0.7, compact_half_width=1.5)
    assert rep.div_l1 == pytest.approx(1.4, abs=1e-6)


def test_zero_field_and_gaussian_datum_pass_every_check():
    rep = validate_hypothesis(drift_from_id("zero"), initial_from_id("gauss"), 1.0)
    assert rep.con1_ok and rep.con2_ok and rep.conIC_ok and rep.div_l1 == 0.0


def test_constant_drift_is_unchanged_by_mollification():
    b = mollify_field(drift_from_id("const:0.3"), MollifierFamily("bump", 0.1))
    np.testing.assert_allclose(b.evaluate(0.0, np.linspace(-1, 1, 11)), 0.3, atol=1e-9)


def test_constant_datum_stays_one_away_from_the_boundary():
    u = mollify_initial(initial_from_id("one"), MollifierFamily("gauss", 0.1))
    np.testing.assert_allclose(u.evaluate(np.linspace(-2.5, 2.5, 51)), 1.0, atol=1e-9)


def test_mollified_indicator_values():
    eps = 0.1
    u = mollify_initial(initial_from_id("step"), MollifierFamily("bump", eps))
    assert float(u.evaluate(np.array([0.0]))[0]) == pytest.approx(0.5, abs=1e-9)
    # indicator of [0, 1] at x = 0.05: int_0^{0.15} rho(0.05 - y) dy
    ref = integrate.quad(lambda y: bump_density(0.05 - y, eps), 0.0, 0.15, epsabs=1e-13)[0]
    assert float(u.evaluate(np.array([0.05]))[0]) == pytest.approx(ref, abs=1e-9)


def test_ou_divergence_inside_clip_radius():
    np.testing.assert_array_equal(drift_from_id("ou").div(0.0, np.linspace(-0.75, 0.75, 31)), -1.0)
