import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relulip.core import INF, RngStream, lp_norm_rows
from relulip.errors import UnsupportedConfiguration
from relulip.lipschitz import (
    LipEstimate,
    breakpoint_hull,
    directional_sup,
    dual_directions,
    exact_lip_1d,
    exact_lip_circle,
    grad_diff_large_norm,
    isometry_ratio,
    large_norm_radius,
    layerwise_upper_bound,
    linear_pieces_1d,
    pointwise_grad_norm,
    sample_points,
    sampled_sup_grad_norm,
    smoothed_directional_derivative,
)
from relulip.network import NetworkParams, gradients_batch, network_from_arrays, sample_network


@pytest.fixture
def remark_net():
    return network_from_arrays([[[1.0], [-1.0]], [[1.0, -1.0]]])


def dense_1d_sup(net, a, b, n=10**6):
    xs = np.linspace(a, b, n)[:, None]
    return float(np.abs(gradients_batch(net, xs)).max())


# -- pointwise -----------------------------------------------------------------------


def test_pointwise_remark(remark_net):
    assert pointwise_grad_norm(remark_net, [0.7], 2).value == 1.0


def test_pointwise_conjugacy():
    net = sample_network(5, 32, 2, "zero", RngStream(1))
    x = RngStream(2).normal(5)
    g = gradients_batch(net, x[None])[0]
    s = pointwise_grad_norm(net, x, 1)
    assert s.p_dual == INF and s.value == np.abs(g).max()
    assert pointwise_grad_norm(net, x, INF).value == pytest.approx(np.abs(g).sum())
    assert pointwise_grad_norm(net, 2 * x, 2).value == pointwise_grad_norm(net, x, 2).value
    with pytest.raises(ValueError):
        pointwise_grad_norm(net, np.zeros(5), 2)


# -- sampled sup ----------------------------------------------------------------------------


def test_sample_points_nested_and_in_domain():
    a = sample_points(3, 5000, RngStream(1), "ball", 2.0)
    b = sample_points(3, 9000, RngStream(1), "ball", 2.0)
    assert np.array_equal(a, b[:5000])
    assert np.all(np.linalg.norm(b, axis=1) <= 2.0 + 1e-12)
    s = sample_points(4, 10, RngStream(1))
    assert np.allclose(np.linalg.norm(s, axis=1), 1)


def test_sampled_sup_single_sample_equals_pointwise():
    net = sample_network(4, 16, 2, "zero", RngStream(3))
    est = sampled_sup_grad_norm(net, 2, 1, RngStream(4))
    x0 = sample_points(4, 1, RngStream(4).spawn("points"))[0]
    assert est.value == pointwise_grad_norm(net, x0, 2).value
    assert est.kind == "lower"
    assert np.allclose(est.argmax, x0)


def test_sampled_sup_remark(remark_net):
    for n in (1, 10, 1000):
        assert sampled_sup_grad_norm(remark_net, 2, n, RngStream(n)).value == 1.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 300), st.integers(1, 300))
def test_sampled_sup_monotone_in_budget(seed, n1, n2):
    net = sample_network(3, 16, 2, "gaussian:0.1", RngStream(seed))
    lo, hi = sorted((n1, n2))
    a = sampled_sup_grad_norm(net, 2, lo, RngStream(seed, "s")).value
    b = sampled_sup_grad_norm(net, 2, hi, RngStream(seed, "s")).value
    assert a <= b


def test_ascent_and_hops_only_improve():
    net = sample_network(6, 96, 2, "zero", RngStream(5))
    base = sampled_sup_grad_norm(net, 1, 500, RngStream(6)).value
    refined = sampled_sup_grad_norm(net, 1, 500, RngStream(6), ascent_starts=2, ascent_steps=20, hops=8)
    assert refined.value >= base
    x = np.asarray(refined.argmax)
    assert pointwise_grad_norm(net, x, 1).value == pytest.approx(refined.value)


def test_smoothed_derivative_gradient_matches_finite_difference():
    net = sample_network(4, 20, 2, "zero", RngStream(7))
    rng = RngStream(8)
    X, V = rng.normal((3, 4)), rng.normal((3, 4))
    taus = [rng.spawn(j).uniform(0.05, 0.2, (3, 1)) for j in range(2)]
    _, G = smoothed_directional_derivative(net, X, V, 0.0, taus)
    h = 1e-6
    for k in range(4):
        E = np.zeros_like(X)
        E[:, k] = h
        Fp, _ = smoothed_directional_derivative(net, X + E, V, 0.0, taus)
        Fm, _ = smoothed_directional_derivative(net, X - E, V, 0.0, taus)
        assert np.allclose(G[:, k], (Fp - Fm) / (2 * h), rtol=1e-5, atol=1e-7)


def test_smoothed_derivative_converges_to_directional_derivative():
    net = sample_network(4, 20, 2, "zero", RngStream(9))
    rng = RngStream(10)
    X, V = rng.normal((5, 4)), rng.normal((5, 4))
    F, _ = smoothed_directional_derivative(net, X, V, 1e-6)
    exact = np.sum(gradients_batch(net, X) * V, axis=1)
    assert np.allclose(F, exact, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("p", [1, 1.5, 2, 3, INF])
def test_dual_directions(p):
    G = RngStream(1).normal((10, 5))
    V = dual_directions(G, p)
    assert np.allclose(lp_norm_rows(V, p), 1)
    q = 1.0 if p == INF else (INF if p == 1 else p / (p - 1))
    assert np.allclose(np.sum(G * V, axis=1), lp_norm_rows(G, q))


# -- directional ------------------------------------------------------------------------------


def test_directional_remark(remark_net):
    assert directional_sup(remark_net, [1.0], 100, RngStream(1)) == 1.0


def test_directional_below_sampled_norm():
    net = sample_network(5, 32, 2, "zero", RngStream(2))
    nu = np.eye(5)[0]
    v = directional_sup(net, nu, 500, RngStream(3))
    assert v <= sampled_sup_grad_norm(net, 2, 500, RngStream(3)).value + 1e-12


def test_directional_rejects_bias_and_bad_direction():
    with pytest.raises(UnsupportedConfiguration):
        directional_sup(sample_network(3, 8, 1, "gaussian:0.1", RngStream(0)), np.eye(3)[0], 10, RngStream(0))
    with pytest.raises(ValueError):
        directional_sup(sample_network(3, 8, 1, "zero", RngStream(0)), np.ones(3), 10, RngStream(0))


def test_directional_rotation_invariance():
    d, trials = 4, 100
    U = np.linalg.qr(RngStream(1).normal((d, d)))[0]
    nu = np.eye(d)[0]
    a, b = [], []
    for t in range(trials):
        net = sample_network(d, 24, 2, "zero", RngStream(2, t))
        w = list(net.weights)
        w[0] = w[0] @ U.T
        rot = NetworkParams(tuple(w), None, net.bias_spec, net.variances, net.seed)
        a.append(directional_sup(net, nu, 200, RngStream(3, t)))
        b.append(directional_sup(rot, U @ nu, 200, RngStream(4, t)))
    a, b = np.array(a), np.array(b)
    se = math.sqrt(a.var(ddof=1) / trials + b.var(ddof=1) / trials)
    assert abs(a.mean() - b.mean()) <= 3 * se


# -- upper bound ---------------------------------------------------------------------------------


def test_upper_bound_remark(remark_net):
    est = layerwise_upper_bound(remark_net, 2)
    assert est.value == pytest.approx(2.0, abs=1e-9)
    assert est.kind == "upper"


@pytest.mark.parametrize("seed", range(5))
def test_upper_dominates_pointwise(seed):
    net = sample_network(6, 32, 3, "gaussian:0.2", RngStream(seed))
    X = RngStream(seed, "x").normal((200, 6)) * 5
    for p in (1, 2, INF):
        up = layerwise_upper_bound(net, p).value
        q = INF if p == 1 else (1.0 if p == INF else 2.0)
        assert np.all(lp_norm_rows(gradients_batch(net, X), q) <= up * (1 + 1e-9))


def test_norm_equivalence_on_sampled_gradients():
    d = 9
    net = sample_network(d, 32, 2, "zero", RngStream(1))
    G = gradients_batch(net, RngStream(2).normal((300, d)))
    two = lp_norm_rows(G, 2)
    for r in (1.0, 1.5, 2.0):
        # ||v||_2 <= ||v||_r <= d^(1/r - 1/2) ||v||_2 for r in [1, 2]
        assert np.all(two <= lp_norm_rows(G, r) * (1 + 1e-12))
        assert np.all(lp_norm_rows(G, r) <= d ** (1 / r - 0.5) * two * (1 + 1e-12))
    for r in (2.0, 3.0, INF):
        # d^(1/r - 1/2) ||v||_2 <= ||v||_r <= ||v||_2 for r in [2, inf]
        e = 0.0 if r == INF else 1 / r
        assert np.all(lp_norm_rows(G, r) <= two * (1 + 1e-12))
        assert np.all(lp_norm_rows(G, r) >= d ** (e - 0.5) * two * (1 - 1e-12))


# -- exact 1-D --------------------------------------------------------------------------------------


def test_exact_1d_examples(remark_net):
    assert exact_lip_1d(remark_net).value == 1.0
    assert exact_lip_1d(network_from_arrays([[[2.0]], [[3.0]]])).value == 6.0
    shifted = network_from_arrays([[[1.0]], [[1.0]]], [[-1.0], [0.0]])
    est = exact_lip_1d(shifted, (-5.0, 5.0))
    assert est.value == 1.0
    edges, slopes = linear_pieces_1d(shifted, -5.0, 5.0)
    assert list(edges) == [-5.0, 1.0, 5.0] and list(slopes) == [0.0, 1.0]


def test_exact_1d_preconditions():
    with pytest.raises(UnsupportedConfiguration):
        exact_lip_1d(sample_network(2, 4, 1, "zero", RngStream(0)))
    with pytest.raises(UnsupportedConfiguration):
        exact_lip_1d(sample_network(1, 4, 1, "gaussian:0.1", RngStream(0)))


def test_exact_1d_infinite_interval():
    net = sample_network(1, 6, 2, "gaussian:0.5", RngStream(3))
    whole = exact_lip_1d(net, (-math.inf, math.inf)).value
    a, b = breakpoint_hull(net)
    assert exact_lip_1d(net, (a, b)).value == whole


@pytest.mark.parametrize("seed", range(6))
def test_exact_1d_matches_dense_grid(seed):
    bias = "zero" if seed % 2 == 0 else "gaussian:0.5"
    net = sample_network(1, 2 + seed, 1 + seed % 3, bias, RngStream(seed, "1d"))
    a, b = breakpoint_hull(net)
    exact = exact_lip_1d(net, (a, b)).value
    assert abs(exact - dense_1d_sup(net, a, b)) <= 1e-6 * max(exact, 1e-300)
    lower = sampled_sup_grad_norm(net, 2, 200, RngStream(seed), domain="ball", radius=max(abs(a), abs(b)))
    assert lower.value <= exact + 1e-12


def test_exact_1d_piece_cap():
    from relulip.errors import ResourceLimitError

    net = sample_network(1, 8, 3, "gaussian:0.5", RngStream(1))
    with pytest.raises(ResourceLimitError):
        linear_pieces_1d(net, -10.0, 10.0, max_pieces=2)


# -- circle ----------------------------------------------------------------------------------------------


def test_circle_three_direction_net():
    t = np.array([0.0, 2.0, 4.0]) * math.pi / 3
    net = network_from_arrays([np.column_stack([np.cos(t), np.sin(t)]), [[1.0, 1.0, 1.0]]])
    est = exact_lip_circle(net, 2, grid=4096)
    ang = np.linspace(0, 2 * math.pi, 4096, endpoint=False)
    X = np.column_stack([np.cos(ang), np.sin(ang)])
    assert np.all(lp_norm_rows(gradients_batch(net, X), 2) <= est.value + 1e-12)
    # the sum of two unit vectors 120 degrees apart has norm 1
    assert est.value == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(3))
def test_circle_matches_dense_grid(seed):
    net = sample_network(2, 8, 2, "zero", RngStream(seed, "c"))
    est = exact_lip_circle(net, 2)
    ang = np.linspace(0, 2 * math.pi, 10**6, endpoint=False)
    X = np.column_stack([np.cos(ang), np.sin(ang)])
    dense = lp_norm_rows(gradients_batch(net, X), 2).max()
    assert abs(est.value - dense) <= 1e-6
    scaled = NetworkParams(net.weights, None)
    assert exact_lip_circle(scaled, 2).value == est.value


def test_circle_preconditions():
    with pytest.raises(UnsupportedConfiguration):
        exact_lip_circle(sample_network(3, 4, 1, "zero", RngStream(0)))
    with pytest.raises(UnsupportedConfiguration):
        exact_lip_circle(sample_network(2, 4, 1, "gaussian:0.1", RngStream(0)))


def test_ordering_lower_exact_upper():
    net = sample_network(2, 10, 2, "zero", RngStream(11))
    for p in (1, 2, INF):
        lo = sampled_sup_grad_norm(net, p, 2000, RngStream(12)).value
        ex = exact_lip_circle(net, p).value
        up = layerwise_upper_bound(net, p).value
        assert lo <= ex + 1e-9 and ex <= up + 1e-9


# -- estimate records -------------------------------------------------------------------------------------


def test_estimate_json_round_trip():
    est = LipEstimate(1.5, INF, "lower", "sample", {"n_samples": 10}, {"master_seed": 1, "path": []}, (0.1, 0.2))
    back = LipEstimate.from_dict(json.loads(json.dumps(est.to_dict())))
    assert back == est
    with pytest.raises(ValueError):
        LipEstimate(-1.0, 2.0, "lower", "x")
    with pytest.raises(ValueError):
        LipEstimate(1.0, 2.0, "guess", "x")


# -- isometry and large-norm difference ----------------------------------------------------------------------


def test_isometry_ratio_homogeneous():
    net = sample_network(6, 64, 3, "zero", RngStream(1))
    x = RngStream(2).normal(6)
    for layer in range(3):
        assert isometry_ratio(net, 4 * x, layer) == pytest.approx(isometry_ratio(net, x, layer), rel=1e-15)
    with pytest.raises(ValueError):
        isometry_ratio(net, np.zeros(6), 0)


def test_isometry_one_layer_mean_square():
    vals = []
    x = np.ones(8) / math.sqrt(8)
    for t in range(200):
        net = sample_network(8, 512, 1, "zero", RngStream(3, t))
        vals.append(isometry_ratio(net, x, 0) ** 2)
    assert 0.9 <= np.mean(vals) <= 1.1


def test_grad_diff_zero_bias_is_zero():
    net = sample_network(4, 32, 2, "zero", RngStream(1))
    res = grad_diff_large_norm(net, 100, RngStream(2))
    assert res.stats.max == 0.0


def test_grad_diff_radius_formula():
    net = sample_network(8, 256, 2, "gaussian:0.1", RngStream(1))
    lam = math.sqrt(128) * net.max_abs_hidden_bias()
    expected = 9 * lam * 256 / 16 / math.sqrt(math.log(32))
    assert large_norm_radius(net) == pytest.approx(expected)
    res = grad_diff_large_norm(net, 200, RngStream(2))
    assert res.radius == pytest.approx(expected)
    assert res.bias_scale == pytest.approx(lam)


def test_grad_diff_larger_radius_does_not_increase():
    means_r, means_2r = [], []
    for t in range(10):
        net = sample_network(8, 256, 2, "gaussian:0.1", RngStream(5, t))
        R = large_norm_radius(net)
        means_r.append(grad_diff_large_norm(net, 500, RngStream(6, t), R).stats.mean)
        means_2r.append(grad_diff_large_norm(net, 500, RngStream(6, t), 2 * R).stats.mean)
    assert np.mean(means_2r) <= np.mean(means_r)
