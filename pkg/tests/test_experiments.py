import json
import math

import numpy as np
import pytest

from relulip.core import RngStream, SummaryStats, json_text
from relulip.experiments import (
    CHECK_NAMES,
    CSV_HEADER,
    ScalingReport,
    Series,
    SweepConfig,
    run_bias_upper_check,
    run_depth_dependence,
    run_gaussian_norm_check,
    run_pointwise_scaling,
    run_shallow_matching,
    run_theta_statistics,
    run_upper_boundedness,
    run_verification_suite,
    theta_pair,
    theta_vectors,
)
from relulip.experiments.scaling import bias_upper_prediction, pointwise_expected_slope, shallow_expected_slope
from relulip.experiments.theta import check_theta_geometry
from relulip.lipschitz import sampled_sup_grad_norm
from relulip.network import NetworkParams, sample_network, zero_bias_counterpart


# -- SweepConfig and reports ---------------------------------------------------------------


@pytest.mark.parametrize("grid", [(8, 8, 16), (16, 8), ()])
def test_sweep_config_rejects_bad_grid(grid):
    with pytest.raises(ValueError):
        SweepConfig("pointwise", "d", grid, {"N": 64, "L": 2, "p": 2})


def test_sweep_config_rejects_bad_trials_and_param():
    with pytest.raises(ValueError):
        SweepConfig("pointwise", "d", (4, 8), trials=0)
    with pytest.raises(ValueError):
        SweepConfig("pointwise", "width", (4, 8))


def test_sweep_config_round_trip_and_width_factor():
    cfg = SweepConfig("shallow", "d", (4, 8), {"L": 1, "width_factor": 64}, 3, {"n_samples": 100}, 5)
    assert SweepConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.point(8)["N"] == 512


def test_report_csv_labels_series_when_several():
    rep = ScalingReport("x", {})
    for label in ("p=1", "p=2"):
        rep.series.append(Series(label, "d", [4, 8], [SummaryStats.of([1.0, 2.0])] * 2))
    text = rep.to_csv(["note"])
    lines = text.splitlines()
    assert lines[0] == "# note"
    assert lines[1] == ",".join(CSV_HEADER)
    assert lines[2].startswith("d[p=1],4,1.5,")
    assert len(lines) == 6


def test_expected_slopes():
    assert pointwise_expected_slope(1.0) == 1.0
    assert pointwise_expected_slope(2.0) == 0.5
    assert pointwise_expected_slope(math.inf) == 0.0
    assert shallow_expected_slope(1.0) == 0.5
    assert shallow_expected_slope(4.0) == 0.75
    assert shallow_expected_slope(math.inf) == 1.0


# -- Gaussian norms ---------------------------------------------------------------------------


def test_gaussian_norm_bands():
    a = run_gaussian_norm_check([100], [1, 2], 10_000, seed=3)
    b = run_gaussian_norm_check([64, 256, 1024], ["inf"], 10_000, seed=3)
    assert a.passed, [v.detail for v in a.verdicts]
    assert b.passed, [v.detail for v in b.verdicts]
    m1 = a.series[0].means[0]
    assert abs(m1 - 100 * math.sqrt(2 / math.pi)) / 79.79 <= 0.01


# -- pointwise scaling --------------------------------------------------------------------------


def _pointwise(p, trials=50, seed=11, **est):
    cfg = SweepConfig("pointwise", "d", (8, 16, 32, 64, 128), {"N": 512, "L": 2, "p": p, "bias": "zero"}, trials, est, seed)
    return run_pointwise_scaling(cfg)


def test_pointwise_slope_p2():
    rep = _pointwise(2)
    assert abs(rep.series[0].fit["slope"] - 0.5) <= 0.1


def test_pointwise_slope_p1():
    rep = _pointwise(1)
    assert abs(rep.series[0].fit["slope"] - 1.0) <= 0.1


def test_pointwise_log_regime_ratio_is_stable():
    rep = _pointwise("ln_d", log_ratio_cv=0.2)
    assert rep.passed, [v.detail for v in rep.verdicts]


def test_pointwise_is_reproducible():
    a = _pointwise(2, trials=3, seed=4)
    b = _pointwise(2, trials=3, seed=4)
    assert json_text(a.to_dict()) == json_text(b.to_dict())
    assert json_text(a.to_dict()) != json_text(_pointwise(2, trials=3, seed=5).to_dict())


# -- the remaining sweeps at small scale ---------------------------------------------------------


def test_shallow_matching_structure():
    cfg = SweepConfig("shallow", "d", (2, 4), {"L": 1, "width_factor": 8, "p_list": [1, 2, "inf"]}, 2, {"n_samples": 64}, 1)
    rep = run_shallow_matching(cfg)
    assert [s.label for s in rep.series] == ["p=1.0", "p=2.0", "p=inf"]
    assert [v.name for v in rep.verdicts] == ["slope[p=1.0]", "slope[p=2.0]", "slope[p=inf]"]
    # the same networks are reused across p, so the l_inf-dual norm (l_1) dominates
    assert all(a >= b for a, b in zip(rep.series[2].means, rep.series[1].means))


def test_shallow_requires_one_layer():
    with pytest.raises(ValueError):
        run_shallow_matching(SweepConfig("shallow", "d", (2, 4), {"L": 2, "width_factor": 8}, 1))


def test_depth_dependence_structure():
    cfg = SweepConfig("depth", "L", (1, 2), {"d": 4, "N": 32}, 3, {"n_samples": 128}, 2)
    rep = run_depth_dependence(cfg)
    assert [v.name for v in rep.verdicts] == ["nonincreasing_in_L", "floor_at_first_L"]
    assert len(rep.extra["per_trial"]) == 2
    assert rep.verdict("floor_at_first_L").passed


def test_upper_boundedness_structure():
    cfg = SweepConfig("upper", "d", (4, 8), {"L": 2, "width_factor": 16}, 2, {"n_samples": 256}, 2)
    rep = run_upper_boundedness(cfg)
    assert len(rep.extra["bounded_ratio_ratios"]) == 2
    assert rep.verdicts[0].name == "bounded_ratio"


def test_bias_upper_records_lambda_as_realized_max_bias():
    cfg = SweepConfig("bias_upper", "d", (4, 8), {"L": 2, "width_factor": 16, "bias": "gaussian:0.1"}, 2, {"n_samples": 128}, 6)
    rep = run_bias_upper_check(cfg)
    root = RngStream(6, "bias-upper")
    lam = np.mean([sample_network(4, 64, 2, "gaussian:0.1", root.spawn("net", 0, t)).max_abs_hidden_bias() for t in range(2)])
    assert rep.extra["lambda_realized_max_abs_bias"][0] == pytest.approx(lam, rel=0, abs=0)
    assert rep.extra["small_ball_constant"] > 0


def test_bias_upper_rejects_zero_bias():
    with pytest.raises(ValueError):
        run_bias_upper_check(SweepConfig("bias_upper", "d", (4, 8), {"L": 2, "width_factor": 16, "bias": "zero"}))


def test_tiny_bias_matches_zero_bias_estimate():
    for t in range(5):
        net = sample_network(8, 128, 2, "gaussian:1e-8", RngStream(t, "net"))
        ref = zero_bias_counterpart(net)
        a = sampled_sup_grad_norm(net, 2, 2000, RngStream(t, "s"), domain="ball", radius=10.0).value
        b = sampled_sup_grad_norm(ref, 2, 2000, RngStream(t, "s"), domain="ball", radius=10.0).value
        assert abs(a - b) / b <= 0.05


def test_bias_upper_prediction_value():
    v = bias_upper_prediction(16, 1024, 2, 2.0, 3.0)
    assert v == pytest.approx(4 * (math.sqrt(2) + math.sqrt(math.log(2 * 3 * 64))))


# -- theta statistics ----------------------------------------------------------------------------


def test_theta_pair_geometry():
    x, y, nu = theta_pair(16, 0.02, RngStream(1))
    check_theta_geometry(x, y, nu, 0.02)
    assert np.linalg.norm(x - y) == pytest.approx(0.02, rel=1e-12)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda x, y, nu: (x * 1.1, y, nu),
        lambda x, y, nu: (x, x, nu),
        lambda x, y, nu: (x, y, (nu + x) / np.linalg.norm(nu + x)),
    ],
)
def test_theta_geometry_violations_raise(mutate):
    x, y, nu = theta_pair(8, 0.05, RngStream(2))
    with pytest.raises(ValueError):
        check_theta_geometry(*mutate(x, y, nu), 0.05)


def test_theta_vanishes_when_inputs_coincide():
    net = sample_network(8, 64, 3, "zero", RngStream(3))
    x, _, nu = theta_pair(8, 0.05, RngStream(4))
    assert all(not np.any(v) for v in theta_vectors(net, x, x, nu))


def test_theta_terms_telescope_to_jacobian_difference():
    from relulip.network import forward, pattern_product

    net = sample_network(6, 48, 3, "zero", RngStream(5))
    x, y, nu = theta_pair(6, 0.3, RngStream(6))
    total = sum(theta_vectors(net, x, y, nu))
    jx = pattern_product(net, forward(net, x).patterns, 0, net.L - 1, rhs=nu)
    jy = pattern_product(net, forward(net, y).patterns, 0, net.L - 1, rhs=nu)
    np.testing.assert_allclose(total, jx - jy, atol=1e-12)


def test_theta_small_run_verdicts():
    rep = run_theta_statistics(8, 256, 2, 0.05, 6, seed=1)
    assert rep.verdict("zero_when_equal").passed
    assert len(rep.extra["median_sq_over_delta"]) == 2
    assert set(rep.extra["median_cross"]) == {"0,1"}


# -- verification suite ---------------------------------------------------------------------------

FAST = ["telescoping", "homogeneity_euler", "angular_bounds", "flip_fraction", "network_io"]


def test_suite_manifest_is_byte_identical(tmp_path):
    run_verification_suite(tmp_path / "a", seed=7, only=FAST)
    run_verification_suite(tmp_path / "b", seed=7, only=FAST)
    a = (tmp_path / "a" / "manifest.json").read_bytes()
    assert a == (tmp_path / "b" / "manifest.json").read_bytes()
    assert (tmp_path / "a" / "timings.json").exists()
    assert json.loads(a)["passed"]


def test_suite_reports_corrupt_network_as_named_failure(tmp_path):
    bad = tmp_path / "net.json"
    bad.write_text('{"d": 2, "N": 3, "L": 1, "weights": [[[1.0')
    manifest, _ = run_verification_suite(None, only=["telescoping", "network_io"], network_file=str(bad))
    by_name = {e["name"]: e for e in manifest["checks"]}
    assert by_name["telescoping"]["passed"]
    assert not by_name["network_io"]["passed"]
    assert "not a valid network file" in by_name["network_io"]["error"]
    assert not manifest["passed"]


def test_suite_loads_a_good_network_file(tmp_path):
    path = sample_network(3, 8, 2, "zero", RngStream(1)).save(tmp_path / "n.json")
    manifest, _ = run_verification_suite(None, only=["network_io"], network_file=str(path))
    assert manifest["passed"]


def test_suite_rejects_unknown_check():
    with pytest.raises(ValueError):
        run_verification_suite(None, only=["nope"])


def test_suite_covers_every_criterion():
    from relulip.experiments.suite import CHECKS

    assert sorted(c.criterion for c in CHECKS if c.criterion is not None) == list(range(1, 18))
    assert len(set(CHECK_NAMES)) == len(CHECK_NAMES)


def test_suite_network_artifact_round_trips(tmp_path):
    run_verification_suite(tmp_path, only=["network_io"])
    net = NetworkParams.load(tmp_path / "network.json")
    assert net.d == 4 and net.N == 64
