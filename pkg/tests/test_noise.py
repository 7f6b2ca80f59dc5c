import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochtransport.errors import GridMismatch
from stochtransport.noise import (
    BrownianPath,
    ControlFunction,
    RunningMoments,
    check_adapted,
    coarsen,
    exponential_of,
    exponential_sde_residuals,
    exponential_weights,
    ito_integral,
    ito_integrals,
    martingale_profile,
    sample_increments,
    sample_path,
    sde_residual_rms,
    stream_seed,
    verify_bf_identity,
)


def test_paths_are_reproducible_and_independent_of_batching():
    a = sample_increments(7, 6, 16, 1.0)
    b = np.concatenate([sample_increments(7, 2, 16, 1.0), sample_increments(7, 4, 16, 1.0, start=2)])
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[3], sample_path(7, 16, 1.0, index=3).increments)
    assert not np.array_equal(a[0], sample_increments(8, 1, 16, 1.0)[0])


def test_stream_seed_depends_on_label_and_root():
    assert stream_seed(1, "a") == stream_seed(1, "a")
    assert len({stream_seed(1, "a"), stream_seed(1, "b"), stream_seed(2, "a")}) == 3


def test_path_values_start_at_zero_and_accumulate():
    p = sample_path(3, 10, 2.0, d=2)
    assert p.values.shape == (11, 2) and np.all(p.values[0] == 0)
    np.testing.assert_allclose(np.diff(p.values, axis=0), p.increments)
    np.testing.assert_allclose(p.times[[0, -1]], [0.0, 2.0])


def test_increment_variance_matches_dt():
    inc = sample_increments(11, 4000, 8, 2.0)
    assert np.var(inc) == pytest.approx(0.25, rel=0.05)


def test_coarsen_sums_blocks():
    inc = sample_increments(1, 3, 8, 1.0)
    c = coarsen(inc, 4)
    assert c.shape == (3, 2, 1)
    np.testing.assert_allclose(c[:, 0], inc[:, :4].sum(axis=1))
    with pytest.raises(ValueError):
        coarsen(inc, 3)


def test_control_parsing_and_norms():
    T, K = 2.0, 8
    assert ControlFunction.parse("0", K, T).l2_norm == 0.0
    assert ControlFunction.parse("1", K, T).l2_norm == pytest.approx(np.sqrt(T))
    assert ControlFunction.parse("const:-0.5", K, T).sup() == 0.5
    sw = ControlFunction.parse("switch", K, T)
    np.testing.assert_array_equal(sw.values[:, 0], [1, 1, 1, 1, -1, -1, -1, -1])
    assert sw.l2_norm == pytest.approx(np.sqrt(T))
    np.testing.assert_allclose(sw.cumulative()[[0, 4, 8], 0], [0.0, 1.0, 0.0], atol=1e-15)
    pw = ControlFunction.parse("0:2;0.5:0", K, T)
    np.testing.assert_array_equal(pw.values[:, 0], [2, 2, 0, 0, 0, 0, 0, 0])


def test_constant_control_gives_closed_form_exponential():
    p = sample_path(5, 32, 1.0)
    h = ControlFunction.constant(0.7, 32, 1.0)
    F = exponential_of(h, p).values
    np.testing.assert_allclose(F, np.exp(0.7 * p.values[:, 0] - 0.5 * 0.49 * p.times), rtol=1e-12)


def test_zero_control_gives_unit_weight():
    inc = sample_increments(2, 5, 8, 1.0)
    np.testing.assert_array_equal(exponential_weights(ControlFunction.parse("0", 8, 1.0), inc, 1.0), 1.0)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32), c=st.floats(-3, 3), K=st.integers(1, 40))
def test_exponential_is_positive_and_finite(seed, c, K):
    F = exponential_weights(ControlFunction.constant(c, K, 1.0), sample_increments(seed, 3, K, 1.0), 1.0)
    assert np.all(F > 0) and np.all(np.isfinite(F))


def test_grid_mismatch_is_reported():
    with pytest.raises(GridMismatch):
        exponential_weights(ControlFunction.constant(1.0, 8, 1.0), sample_increments(0, 2, 16, 1.0), 1.0)
    with pytest.raises(GridMismatch):
        exponential_of(ControlFunction.constant(1.0, 8, 1.0), sample_path(0, 8, 2.0))


def test_ito_sum_of_b_db_matches_algebraic_identity():
    p = sample_path(9, 64, 1.0)
    B = p.values[:-1, 0]
    expected = 0.5 * (p.values[-1, 0] ** 2 - np.sum(p.increments ** 2))
    assert ito_integral(B, p) == pytest.approx(expected, abs=1e-12)


def test_sde_residual_shrinks_with_refinement():
    rms = sde_residual_rms(lambda K: ControlFunction.constant(1.0, K, 1.0), 4, 400, [16, 64, 256])
    assert rms[16] > rms[64] > rms[256]
    order = np.polyfit(np.log([1 / 16, 1 / 64, 1 / 256]), np.log([rms[16], rms[64], rms[256]]), 1)[0]
    assert 0.25 <= order <= 0.75
    assert np.all(exponential_sde_residuals(ControlFunction.parse("0", 8, 1.0),
                                            sample_increments(0, 3, 8, 1.0), 1.0) == 0)


def test_adaptedness_check_detects_look_ahead():
    p = sample_path(1, 32, 1.0)
    rng = np.random.default_rng(0)
    assert check_adapted(lambda inc: BrownianPath(inc, 1.0).values[:, 0], p, rng)
    # B_{t_{k+1}} reported at index k peeks at the increment dB_k
    assert not check_adapted(lambda inc: BrownianPath(inc, 1.0).values[1:, 0], p, rng)


@settings(max_examples=40)
@given(data=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60),
       cuts=st.lists(st.integers(1, 59), max_size=5))
def test_running_moments_match_numpy_under_any_chunking(data, cuts):
    x = np.array(data)
    acc = RunningMoments()
    for part in np.split(x, sorted({c for c in cuts if c < len(x)})):
        acc.update(part)
    assert acc.n == len(x)
    assert acc.mean == pytest.approx(x.mean(), abs=1e-9 * (1 + np.abs(x).max()))
    assert acc.var == pytest.approx(x.var(ddof=1), rel=1e-7, abs=1e-6)


def test_martingale_mean_stays_at_one():
    mean, se = martingale_profile(ControlFunction.parse("switch", 16, 1.0), 12, 4000, chunk=1000)
    assert mean[0] == 1.0 and se[0] == 0.0
    assert np.all(np.abs(mean - 1) <= 4 * se + 1e-12)


def test_bf_identity_with_brownian_integrand():
    K, T = 16, 1.0
    h = ControlFunction.constant(1.0, K, T)
    # E[B_{t_k} F_T] = t_k under the tilted measure, so the right side is sum t_k dt
    closed = float(np.sum(np.arange(K) * (T / K)) * (T / K))
    def left_brownian(inc):
        return (np.cumsum(inc, axis=1) - inc)[..., 0]  # B_{t_k}, k < K

    rep = verify_bf_identity(left_brownian,
        h, 21, 6000, chunk=2000, closed_form=closed)
    assert rep.agree(4.0)
    assert abs(rep.rhs.mean - closed) <= 4 * rep.rhs.stderr
    assert abs(rep.lhs.mean - closed) <= 4 * rep.lhs.stderr


def test_single_step_endpoints_over_many_seeds():
    B = np.array([sample_path(s, 1, 2.0).increments[0, 0] for s in range(100_000)])
    assert abs(B.mean()) <= 4 * B.std(ddof=1) / np.sqrt(B.size)
    assert B.var() == pytest.approx(2.0, rel=0.02)


def test_brownian_covariance():
    inc = sample_increments(31, 100_000, 2, 1.0)[..., 0]
    prod = inc[:, 0] * inc.sum(axis=1)  # B_{1/2} B_1
    assert abs(prod.mean() - 0.5) <= 3 * prod.std(ddof=1) / np.sqrt(prod.size)


def test_exponential_on_a_path_returning_to_zero():
    inc = np.array([[0.3], [-0.8], [0.5]])
    F = exponential_of(ControlFunction.constant(1.0, 3, 1.0), BrownianPath(inc, 1.0)).terminal
    assert F == pytest.approx(np.exp(-0.5), rel=1e-14)


def test_terminal_exponential_has_unit_mean():
    h = ControlFunction.constant(1.0, 4, 1.0)
    F = exponential_weights(h, sample_increments(41, 100_000, 4, 1.0), 1.0)[:, -1]
    assert abs(F.mean() - 1) <= 3 * F.std(ddof=1) / np.sqrt(F.size)


def test_residual_halves_per_fourfold_refinement():
    rms = sde_residual_rms(lambda K: ControlFunction.constant(1.0, K, 1.0), 13, 1000, [64, 256, 1024])
    for a, b in ((64, 256), (256, 1024)):
        assert 2 / 1.5 <= rms[a] / rms[b] <= 2 * 1.5


def test_one_step_residual_is_closed_form():
    dB = 0.37
    res = exponential_sde_residuals(ControlFunction.constant(1.0, 1, 1.0), np.array([[dB]]), 1.0)
    assert float(res) == pytest.approx(abs(np.exp(dB - 0.5) - (1 + dB)), rel=1e-14)


def test_ito_sums_of_simple_integrands():
    p = sample_path(2, 16, 1.0)
    assert ito_integral(np.zeros(16), p) == 0.0
    assert ito_integral(np.ones(16), p) == pytest.approx(p.values[-1, 0], abs=1e-14)


def test_ito_isometry():
    inc = sample_increments(51, 100_000, 8, 1.0)[..., 0]
    B = np.cumsum(inc, axis=1) - inc  # B_{t_k}
    I2 = ito_integrals(B, inc[..., None]) ** 2
    Q = np.sum(B ** 2, axis=1) / 8
    d = I2 - Q
    assert abs(d.mean()) <= 3 * d.std(ddof=1) / np.sqrt(d.size)


def test_bf_identity_without_control():
    K = 8
    rep = verify_bf_identity(lambda inc: (np.cumsum(inc, axis=1) - inc)[..., 0], ControlFunction.parse("0", K, 1.0),
                             61, 20_000, chunk=5000)
    assert rep.rhs.mean == 0.0
    assert abs(rep.lhs.mean) <= 3 * rep.lhs.stderr
