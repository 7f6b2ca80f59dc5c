import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochtransport.characteristics import (
    BatchTransport,
    FlowMap,
    backward_characteristics,
    default_lattice,
    deterministic_solve,
    invert_flow,
    round_trip_error,
    solve_forward,
    transport_solution,
)
from stochtransport.errors import GridMismatch, NonInvertibleFlow
from stochtransport.field import (
    Divergence,
    MollifierFamily,
    VectorField,
    drift_from_id,
    initial_from_id,
    mollify_field,
    mollify_initial,
    zero_drift,
)
from stochtransport.noise import BrownianPath, coarsen, sample_increments, sample_path


def linear_drift(L=50.0):
    """Unclipped ``b = -x`` on a box large enough that no path leaves it."""
    return VectorField("linear", 1, lambda t, x: -x, L, L, Divergence("analytic", lambda t, x: -np.ones(x.shape[:-1])))


def test_zero_drift_flow_is_a_shift_by_the_path():
    p = sample_path(3, 40, 1.0)
    flow = solve_forward(drift_from_id("zero"), p, np.linspace(-1, 1, 11))
    np.testing.assert_allclose(flow.trajectories[..., 0] - flow.lattice[:, 0], p.values[:, :1] * np.ones(11),
                               atol=1e-12)


def test_constant_drift_transport_is_an_exact_shift():
    u0 = initial_from_id("bump")
    p = sample_path(4, 50, 0.5)
    b = drift_from_id("const:0.4")
    x = np.linspace(-1.5, 1.5, 61)
    flow = solve_forward(b, p, default_lattice(b, u0, b.L))
    u = transport_solution(u0, flow, x, steps=[50], use_table=False).values[0]
    np.testing.assert_allclose(u, u0.evaluate(x - 0.4 * 0.5 - p.values[-1, 0]), atol=1e-3)


def test_euler_maruyama_has_strong_order_one_for_additive_noise():
    b = linear_drift()
    x0 = np.array([-1.0, 0.3, 2.0])
    K_fine, M = 2048, 40
    inc = sample_increments(17, M, K_fine, 1.0)
    ref = np.stack([solve_forward(b, BrownianPath(inc[m], 1.0), x0, method="direct").at(K_fine)[:, 0]
                    for m in range(M)])
    errs = []
    for K in (16, 32, 64, 128):
        coarse = coarsen(inc, K_fine // K)
        XT = np.stack([solve_forward(b, BrownianPath(coarse[m], 1.0), x0, method="direct").at(K)[:, 0]
                       for m in range(M)])
        errs.append(np.sqrt(np.mean((XT - ref) ** 2)))
    order = -np.polyfit(np.log([16, 32, 64, 128]), np.log(errs), 1)[0]
    assert order >= 0.9


def test_table_and_direct_drift_evaluation_agree():
    b = mollify_field(drift_from_id("sign"), MollifierFamily("bump", 0.2))
    p = sample_path(2, 64, 1.0)
    lat = np.linspace(-1, 1, 41)
    a = solve_forward(b, p, lat, method="table").trajectories
    c = solve_forward(b, p, lat, method="direct").trajectories
    np.testing.assert_allclose(a, c, atol=1e-4)


def test_round_trip_is_within_lattice_spacing():
    b = mollify_field(drift_from_id("sign"), MollifierFamily("bump", 0.1))
    lat = np.linspace(-1.5, 1.5, 241)
    flow = solve_forward(b, sample_path(5, 128, 1.0), lat)
    for k in (0, 64, 128):
        Xk = flow.at(k)[:, 0]
        x = np.linspace(Xk[0], Xk[-1], 97)  # forward interpolation is only defined on the image
        assert round_trip_error(flow, k, x) <= 2 * (lat[1] - lat[0])
    x = np.linspace(-1.2, 1.2, 97)
    np.testing.assert_allclose(invert_flow(flow, 0, x), x, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), did=st.sampled_from(["ou", "sign", "antisign", "sqrtsign"]))
def test_transport_preserves_the_range_of_the_datum(seed, did):
    b = mollify_field(drift_from_id(did), MollifierFamily("gauss", 0.2))
    u0 = initial_from_id("odd")
    flow = solve_forward(b, sample_path(seed, 64, 1.0), default_lattice(b, u0, b.L, spacing=0.02))
    sample = transport_solution(u0, flow, np.linspace(-2.5, 2.5, 101), steps=[16, 64])
    assert sample.within_bounds(1e-9)
    assert np.max(np.abs(sample.values)) <= u0.sup_bound + 1e-9


def test_folded_flow_is_rejected():
    lat = np.linspace(-1, 1, 5)
    X = np.stack([lat, lat[::-1]])[..., None]
    flow = FlowMap(np.array([0.0, 1.0]), lat[:, None], X, 3.0)
    with pytest.raises(NonInvertibleFlow):
        invert_flow(flow, 1, np.array([0.0]))


def test_drift_and_path_dimensions_must_match():
    with pytest.raises(GridMismatch):
        solve_forward(drift_from_id("ou"), sample_path(0, 4, 1.0, d=2), np.linspace(-1, 1, 3))


def test_two_dimensional_zero_drift_shift():
    g = np.linspace(-1, 1, 21)
    lat = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    p = sample_path(8, 10, 0.5, d=2)
    flow = solve_forward(zero_drift(d=2), p, lat)
    x = np.array([[0.1, -0.2], [0.0, 0.3]])
    np.testing.assert_allclose(invert_flow(flow, 10, x + p.values[-1]), x, atol=1e-10)


def test_batch_matches_single_path_pipeline():
    b = mollify_field(drift_from_id("ou"), MollifierFamily("bump", 0.2))
    u0 = initial_from_id("bump")
    lat = default_lattice(b, u0, b.L)
    x = np.linspace(-2, 2, 81)
    steps = np.array([0, 32, 64])
    inc = sample_increments(6, 3, 64, 1.0)
    vals, status = BatchTransport(b, u0, lat, x, steps, 1 / 64).run(inc)
    assert np.all(status == 0)
    for m in range(3):
        single = transport_solution(u0, solve_forward(b, BrownianPath(inc[m], 1.0), lat), x, steps).values
        np.testing.assert_allclose(vals[m], single, atol=1e-9)


def test_backward_characteristics_for_constant_drift():
    u0 = initial_from_id("bump")
    x = np.linspace(-1, 1, 41)
    got = backward_characteristics(drift_from_id("const:0.3"), u0, 1.0, x, 40)
    np.testing.assert_allclose(got, u0.evaluate(x - 0.3), atol=1e-5)


def test_backward_characteristics_in_linear_region_of_ou():
    u0 = initial_from_id("bump")
    T = 0.5
    x = np.linspace(-0.3, 0.3, 25)  # |x| e^T stays inside the linear region |x| <= 0.75
    got = backward_characteristics(drift_from_id("ou"), u0, T, x, 200)
    np.testing.assert_allclose(got, u0.evaluate(x * np.exp(T)), atol=1e-5)
    with pytest.raises(ValueError):
        backward_characteristics(zero_drift(d=2), u0, T, np.zeros((1, 2)), 10)


def test_lattice_pipeline_agrees_with_backward_oracle_for_smooth_data():
    rho = MollifierFamily("bump", 0.2)
    b = mollify_field(drift_from_id("sign"), rho)
    u0 = mollify_initial(initial_from_id("bump"), rho)
    x = np.linspace(-2, 2, 161)
    lattice = deterministic_solve(b, u0, 512, 1.0, x, steps=[512]).values[0]
    oracle = backward_characteristics(b, u0, 1.0, x, 2048)
    assert np.max(np.abs(lattice - oracle)) < 2e-2


def test_constant_drift_characteristics_and_inverse_are_exact():
    p = sample_path(12, 20, 1.0)
    lat = np.linspace(-1, 1, 9)
    flow = solve_forward(drift_from_id("const:0.3"), p, lat, method="direct")
    shift = 0.3 * p.times + p.values[:, 0]
    np.testing.assert_allclose(flow.trajectories[..., 0], lat[None, :] + shift[:, None], atol=1e-13)
    x = np.linspace(-0.5, 0.5, 7)
    for k in (5, 20):
        np.testing.assert_allclose(invert_flow(flow, k, x), x - shift[k], atol=1e-12)


def test_zero_drift_inverse_is_exact():
    p = sample_path(13, 10, 1.0)
    flow = solve_forward(drift_from_id("zero"), p, np.linspace(-2, 2, 41))
    x = np.linspace(-0.5, 0.5, 11)
    np.testing.assert_allclose(invert_flow(flow, 10, x), x - p.values[-1, 0], atol=1e-12)


def test_linear_drift_follows_the_discrete_recursion():
    p = sample_path(14, 50, 1.0)
    x0 = np.array([-1.0, 0.5])
    X = solve_forward(linear_drift(), p, x0, method="direct").trajectories[..., 0]
    ref = np.empty_like(X)
    ref[0] = x0
    for k in range(50):
        ref[k + 1] = ref[k] * (1 - p.dt) + p.increments[k, 0]
    np.testing.assert_allclose(X, ref, rtol=1e-13, atol=1e-14)


def test_constants_are_transported_to_themselves():
    b = mollify_field(drift_from_id("sign"), MollifierFamily("bump", 0.1))
    flow = solve_forward(b, sample_path(15, 64, 1.0), np.linspace(-3, 3, 481))
    sample = transport_solution(initial_from_id("one"), flow, np.linspace(-1, 1, 41), steps=[32, 64])
    np.testing.assert_array_equal(sample.values, 1.0)


def test_mass_matches_a_ten_times_finer_lattice():
    b = mollify_field(drift_from_id("sign"), MollifierFamily("bump", 0.1))
    u0 = initial_from_id("bump")
    p = sample_path(16, 128, 0.5)
    x = np.linspace(-3, 3, 3001)

    def mass(spacing):
        flow = solve_forward(b, p, default_lattice(b, u0, b.L, spacing=spacing))
        u = transport_solution(u0, flow, x, steps=[128]).values[0]
        return np.sum(0.5 * (u[1:] + u[:-1]) * np.diff(x))

    assert mass(0.0125) == pytest.approx(mass(0.00125), rel=2e-3)


def test_compressive_drift_collides_at_small_eps():
    x, lat = np.linspace(-1, 1, 11), np.linspace(-1, 1, 161)
    smooth = mollify_field(drift_from_id("antisign"), MollifierFamily("bump", 0.2))
    deterministic_solve(smooth, initial_from_id("bump"), 64, 1.0, x, lattice=lat)
    sharp = mollify_field(drift_from_id("antisign"), MollifierFamily("bump", 0.01))
    with pytest.raises(NonInvertibleFlow):
        deterministic_solve(sharp, initial_from_id("bump"), 64, 1.0, x, lattice=lat)


def test_odd_datum_under_expanding_drift_vanishes_at_origin():
    b = mollify_field(drift_from_id("sign"), MollifierFamily("bump", 0.1))
    u0 = mollify_initial(initial_from_id("odd"), MollifierFamily("bump", 0.1))
    u = deterministic_solve(b, u0, 128, 1.0, np.array([-0.3, 0.0, 0.3]), steps=[64, 128]).values
    # lookup tables and lattice inversion are symmetric only up to interpolation error
    np.testing.assert_allclose(u[:, 1], 0.0, atol=1e-6)
    np.testing.assert_allclose(u[:, 0], -u[:, 2], atol=1e-6)
