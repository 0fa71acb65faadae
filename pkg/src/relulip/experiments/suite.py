"""The pinned-seed verification suite.

Each check returns a verdict and a small dictionary of measured values. The
manifest holds only deterministic content so two runs with the same seed
produce identical bytes; wall-clock timings are returned separately.
"""

from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import (
    INF,
    RngStream,
    ks_critical_value,
    ks_two_sample,
    lp_norm_rows,
    write_csv,
    write_json,
)
from ..lipschitz import (
    breakpoint_hull,
    exact_lip_1d,
    exact_lip_circle,
    grad_diff_large_norm,
    isometry_ratio,
    sampled_sup_grad_norm,
)
from ..network import (
    NetConfig,
    NetworkParams,
    finite_difference_gradient,
    formal_gradient,
    forward,
    gradients_batch,
    sample_network,
    telescoping_decomposition,
)
from ..randgrad import opnorm_functional_sample
from ..tessellation import local_flip_max_experiment, pair_at_angle, sign_flip_count
from .report import CSV_HEADER, ScalingReport, SweepConfig
from .scaling import (
    run_depth_dependence,
    run_gaussian_norm_check,
    run_pointwise_scaling,
    run_shallow_matching,
    run_upper_boundedness,
)
from .theta import run_theta_statistics

MANIFEST_FORMAT = "relulip-verify/1"
DEFAULT_SEED = 20240601


@dataclass
class CheckContext:
    seed: int
    out_dir: Path | None
    threads: int | None
    network_file: str | None = None
    invocation: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    def stream(self, name: str) -> RngStream:
        return RngStream(self.seed, "verify", name)

    def write_report(self, name: str, report: ScalingReport) -> None:
        if self.out_dir is None:
            return
        self.write_json(f"{name}.json", report.to_dict())
        comments = (f"invocation: {json.dumps(self.invocation, sort_keys=True)}",)
        write_csv(self.out_dir / f"{name}.csv", CSV_HEADER, report.csv_rows(), comments)
        self.artifacts.append(f"{name}.csv")

    def write_json(self, name: str, doc: dict) -> None:
        if self.out_dir is None:
            return
        write_json(self.out_dir / name, {**doc, "invocation": self.invocation})
        self.artifacts.append(name)

    def sweep_seed(self, name: str) -> int:
        # a stable integer per check derived from the master seed
        return int(self.stream(name).integers(0, 2**31))


def _report_result(report: ScalingReport) -> tuple[bool, dict]:
    return report.passed, {v.name: {"passed": v.passed, "detail": v.detail} for v in report.verdicts}


# -- exact identities ------------------------------------------------------------------


def check_telescoping(ctx: CheckContext):
    rng = ctx.stream("telescoping")
    worst = 0.0
    for t in range(50):
        net = sample_network(4, 16, 4, "gaussian:0.1", rng.spawn("net", t))
        x, y = rng.spawn("x", t).normal(4), rng.spawn("y", t).normal(4)
        for l1 in range(net.L):
            for l2 in range(-1, net.L):
                diff, terms = telescoping_decomposition(net, x, y, l1, l2)
                resid = float(np.linalg.norm(diff - sum(terms, np.zeros_like(diff))))
                scale = max(sum(float(np.linalg.norm(T)) for T in terms), float(np.linalg.norm(diff)))
                rel = resid / scale if scale > 0 else (0.0 if resid == 0 else math.inf)
                worst = max(worst, rel)
    return worst <= 1e-9, {"max_relative_residual": worst, "tolerance": 1e-9}


def check_finite_difference(ctx: CheckContext):
    rng = ctx.stream("finite-difference")
    h = 1e-5
    worst, redraws = 0.0, 0
    for t in range(100):
        net = sample_network(8, 64, 3, "gaussian:0.1", rng.spawn("net", t))
        for attempt in range(1000):
            x = rng.spawn("x", t, attempt).normal(8)
            fd = finite_difference_gradient(net, x, h)
            if not fd.straddles:
                break
            redraws += 1
        else:
            raise RuntimeError("could not find a point away from region boundaries")
        worst = max(worst, float(np.max(np.abs(fd.gradient - formal_gradient(net, x)))))
    return worst <= 1e-9, {"max_abs_deviation": worst, "tolerance": 1e-9, "redraws": redraws, "h": h}


def check_homogeneity(ctx: CheckContext):
    rng = ctx.stream("homogeneity")
    worst_grad, worst_euler, pattern_ok = 0.0, 0.0, True
    for t in range(100):
        net = sample_network(8, 64, 3, "zero", rng.spawn("net", t))
        x = rng.spawn("x", t).normal(8)
        tr = forward(net, x)
        g = formal_gradient(net, tr)
        for a in (0.5, 2.0, 10.0):
            ta = forward(net, a * x)
            pattern_ok &= all(np.array_equal(p, q) for p, q in zip(tr.patterns, ta.patterns))
            worst_grad = max(worst_grad, float(np.max(np.abs(formal_gradient(net, ta) - g))))
        rel = abs(g @ x - tr.output) / max(abs(tr.output), 1e-300)
        worst_euler = max(worst_euler, rel)
    ok = pattern_ok and worst_grad <= 1e-12 and worst_euler <= 1e-10
    return ok, {"patterns_equal": pattern_ok, "max_grad_deviation": worst_grad, "max_euler_relative": worst_euler}


# -- tessellation ----------------------------------------------------------------------------


def check_angular_bounds(ctx: CheckContext):
    rng = ctx.stream("angular")
    n, d = 10_000, 8
    X, Y = rng.spawn("x").unit_vectors(n, d), rng.spawn("y").unit_vectors(n, d)
    ang = np.arccos(np.clip(np.sum(X * Y, axis=1), -1, 1)) / np.pi
    chord = np.linalg.norm(X - Y, axis=1)
    sandwich = int(np.count_nonzero((chord / np.pi > ang) | (ang > chord)))
    A = rng.spawn("a").normal((n, d)) * rng.spawn("sa").uniform(0.01, 100, (n, 1))
    B = rng.spawn("b").normal((n, d)) * rng.spawn("sb").uniform(0.01, 100, (n, 1))
    na, nb = np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1)
    lhs = np.linalg.norm(A / na[:, None] - B / nb[:, None], axis=1)
    rhs = 2 / np.maximum(na, nb) * np.linalg.norm(A - B, axis=1)
    normalized = int(np.count_nonzero(lhs > rhs))
    return sandwich == 0 and normalized == 0, {"sandwich_violations": sandwich, "normalized_violations": normalized, "pairs": n}


def check_flip_fraction(ctx: CheckContext):
    rng = ctx.stream("flip-fraction")
    x, y = pair_at_angle(16, 0.25, rng.spawn("pair"))
    frac = sign_flip_count(rng.spawn("A").normal((50_000, 16)), x, y).fraction
    return abs(frac - 0.25) <= 0.01, {"fraction": frac, "target": 0.25, "tolerance": 0.01}


def check_local_tessellation(ctx: CheckContext):
    m = local_flip_max_experiment(16, 4096, 0.01, 1000, ctx.stream("local"))
    return m <= 0.05, {"max_fraction": m, "bound": 0.05}


# -- concentration ------------------------------------------------------------------------------


def check_isometry(ctx: CheckContext):
    rng = ctx.stream("isometry")
    inside = 0
    lo, hi = 0.5, math.e
    extremes = [math.inf, -math.inf]
    for t in range(100):
        net = sample_network(16, 2048, 3, "zero", rng.spawn("net", t))
        x = rng.spawn("x", t).normal(16)
        r = [isometry_ratio(net, x, j) for j in range(net.L)]
        extremes = [min(extremes[0], *r), max(extremes[1], *r)]
        inside += all(lo <= v <= hi for v in r)
    return inside >= 99, {"trials_in_band": inside, "trials": 100, "min_ratio": extremes[0], "max_ratio": extremes[1]}


def check_pointwise(ctx: CheckContext):
    verdicts, ok = {}, True
    for p, tag in ((2, "p2"), (1, "p1")):
        cfg = SweepConfig(
            "pointwise", "d", (8, 16, 32, 64, 128), {"N": 512, "L": 2, "p": p, "bias": "zero"}, 50,
            {"slope_tol": 0.1}, ctx.sweep_seed("pointwise"),
        )
        rep = run_pointwise_scaling(cfg, ctx.threads)
        ctx.write_report(f"pointwise_{tag}", rep)
        passed, v = _report_result(rep)
        ok &= passed
        verdicts[tag] = v
    return ok, verdicts


def check_gaussian_norms(ctx: CheckContext):
    seed = ctx.sweep_seed("gaussian")
    a = run_gaussian_norm_check([100], [1, 2], 10_000, seed=seed)
    b = run_gaussian_norm_check([64, 256, 1024], ["inf"], 10_000, seed=seed)
    ctx.write_report("gaussian_norm_l1_l2", a)
    ctx.write_report("gaussian_norm_linf", b)
    pa, va = _report_result(a)
    pb, vb = _report_result(b)
    return pa and pb, {**va, **vb}


def check_shallow(ctx: CheckContext):
    cfg = SweepConfig(
        "shallow", "d", (4, 8, 16, 32), {"L": 1, "width_factor": 64, "p_list": [1, 2, "inf"], "bias": "zero"}, 30,
        {"n_samples": 10_000, "ascent_starts": 4, "ascent_steps": 60, "slope_tol": 0.15}, ctx.sweep_seed("shallow"),
    )
    rep = run_shallow_matching(cfg, ctx.threads)
    ctx.write_report("shallow", rep)
    return _report_result(rep)


def check_upper(ctx: CheckContext):
    cfg = SweepConfig(
        "upper", "d", (8, 16, 32), {"L": 2, "width_factor": 64, "bias": "zero"}, 20,
        {"n_samples": 10_000, "ratio_factor": 3.0}, ctx.sweep_seed("upper"),
    )
    rep = run_upper_boundedness(cfg, ctx.threads)
    ctx.write_report("upper", rep)
    return _report_result(rep)


def check_depth(ctx: CheckContext):
    cfg = SweepConfig(
        "depth", "L", (1, 2, 4), {"d": 32, "N": 1024, "bias": "zero"}, 20,
        {"n_samples": 4096, "floor_factor": 0.05}, ctx.sweep_seed("depth"),
    )
    rep = run_depth_dependence(cfg, ctx.threads)
    ctx.write_report("depth", rep)
    return _report_result(rep)


def check_distributional_equivalence(ctx: CheckContext):
    cfg = NetConfig(8, 64, 3)
    x = np.ones(8) / math.sqrt(8)
    rng = ctx.stream("ks")
    a = opnorm_functional_sample(cfg, 0, 2, np.eye(8), 400, rng.spawn("dbar"), "dbar", x, ctx.threads)
    b = opnorm_functional_sample(cfg, 0, 2, np.eye(8), 400, rng.spawn("dhat"), "dhat", None, ctx.threads)
    stat = ks_two_sample(a, b)
    crit = 0.115
    return stat < crit, {"ks_statistic": stat, "threshold": crit, "critical_value_1pct": ks_critical_value(400, 400)}


# -- exact oracles ---------------------------------------------------------------------------------


def check_exact_1d(ctx: CheckContext):
    rng = ctx.stream("exact1d")
    worst_rel, dominated = 0.0, True
    for t in range(20):
        N, L = 2 + t % 7, 1 + t % 3
        bias = "zero" if t % 2 == 0 else "gaussian:0.5"
        net = sample_network(1, N, L, bias, rng.spawn("net", t))
        a, b = breakpoint_hull(net)
        exact = exact_lip_1d(net, (a, b)).value
        xs = np.linspace(a, b, 10**6)[:, None]
        dense = float(np.abs(gradients_batch(net, xs)).max())
        worst_rel = max(worst_rel, abs(exact - dense) / max(exact, 1e-300))
        radius = max(abs(a), abs(b))
        lower = sampled_sup_grad_norm(net, 2, 1000, rng.spawn("search", t), domain="ball", radius=radius, hops=32).value
        dominated &= lower <= exact * (1 + 1e-12)
    return worst_rel <= 1e-6 and dominated, {"max_relative_gap": worst_rel, "tolerance": 1e-6, "dominates_samples": dominated}


def check_circle(ctx: CheckContext):
    rng = ctx.stream("circle")
    worst, dominated = 0.0, True
    ang = np.linspace(0, 2 * math.pi, 10**6, endpoint=False)
    X = np.column_stack([np.cos(ang), np.sin(ang)])
    for t in range(10):
        N, L = (4, 8, 12, 16)[t % 4], 1 + t % 2
        net = sample_network(2, N, L, "zero", rng.spawn("net", t))
        exact = exact_lip_circle(net, 2).value
        dense = float(lp_norm_rows(gradients_batch(net, X), 2).max())
        worst = max(worst, abs(exact - dense))
        lower = sampled_sup_grad_norm(net, 2, 1000, rng.spawn("search", t), hops=32).value
        dominated &= lower <= exact + 1e-9
    return worst <= 1e-6 and dominated, {"max_abs_gap": worst, "tolerance": 1e-6, "dominates_samples": dominated}


# -- large-norm and depth-structure checks ----------------------------------------------------------


def check_grad_difference(ctx: CheckContext):
    rng = ctx.stream("grad-diff")
    zero = sample_network(8, 256, 2, "zero", rng.spawn("zero"))
    self_diff = grad_diff_large_norm(zero, 500, rng.spawn("zero-pts")).stats.max
    sups = {256: [], 1024: []}
    for t in range(20):
        for N in sups:
            net = sample_network(8, N, 2, "gaussian:0.1", rng.spawn("net", t))
            sups[N].append(grad_diff_large_norm(net, 2000, rng.spawn("pts", t)).sup)
    m256, m1024 = float(np.mean(sups[256])), float(np.mean(sups[1024]))
    ok = self_diff == 0.0 and m1024 <= m256
    return ok, {"zero_bias_self_difference": self_diff, "mean_sup_N256": m256, "mean_sup_N1024": m1024}


def check_theta(ctx: CheckContext):
    rep = run_theta_statistics(16, 4096, 3, 0.02, 50, ctx.sweep_seed("theta"), ctx.threads)
    ctx.write_json("theta.json", rep.to_dict())
    return _report_result(rep)


def check_network_io(ctx: CheckContext):
    if ctx.network_file is not None:
        net = NetworkParams.load(ctx.network_file)
        return True, {"loaded": str(ctx.network_file), "d": net.d, "N": net.N, "L": net.L}
    net = sample_network(4, 64, 2, "gaussian:0.1", ctx.stream("io"))
    back = NetworkParams.from_dict(net.to_dict())
    if ctx.out_dir is not None:
        ctx.write_json("network.json", net.to_dict())
        back = NetworkParams.load(ctx.out_dir / "network.json")
    return back.same_parameters(net), {"round_trip_exact": back.same_parameters(net)}


@dataclass(frozen=True)
class Check:
    criterion: int | None
    name: str
    run: Callable


CHECKS = (
    Check(1, "telescoping", check_telescoping),
    Check(2, "finite_difference", check_finite_difference),
    Check(3, "homogeneity_euler", check_homogeneity),
    Check(4, "angular_bounds", check_angular_bounds),
    Check(5, "flip_fraction", check_flip_fraction),
    Check(6, "local_tessellation", check_local_tessellation),
    Check(7, "isometry_band", check_isometry),
    Check(8, "pointwise_scaling", check_pointwise),
    Check(9, "gaussian_norms", check_gaussian_norms),
    Check(10, "shallow_matching", check_shallow),
    Check(11, "upper_boundedness", check_upper),
    Check(12, "depth_trend", check_depth),
    Check(13, "distributional_equivalence", check_distributional_equivalence),
    Check(14, "exact_1d_oracle", check_exact_1d),
    Check(15, "circle_oracle", check_circle),
    Check(16, "bias_gradient_difference", check_grad_difference),
    Check(17, "theta_statistics", check_theta),
    Check(None, "network_io", check_network_io),
)
CHECK_NAMES = tuple(c.name for c in CHECKS)


def _plain(o):
    if isinstance(o, dict):
        return {k: _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    return o


def run_verification_suite(
    out_dir=None,
    seed: int = DEFAULT_SEED,
    only=None,
    threads: int | None = None,
    network_file: str | None = None,
    invocation: dict | None = None,
    progress: Callable | None = None,
) -> tuple[dict, dict]:
    """Run the checks and return ``(manifest, timings)``.

    A check that raises is recorded as failed with the exception text and
    the suite moves on. When ``out_dir`` is given, per-check reports,
    ``manifest.json`` and ``timings.json`` are written there.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    selected = CHECKS if not only else tuple(c for c in CHECKS if c.name in set(only))
    unknown = set(only or ()) - set(CHECK_NAMES)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    entries, timings = [], {}
    t_start = time.perf_counter()
    for check in selected:
        ctx = CheckContext(seed, out, threads, network_file, invocation or {})
        t0 = time.perf_counter()
        error = None
        try:
            passed, details = check.run(ctx)
        except Exception as exc:  # recorded, suite continues
            passed, details = False, {}
            error = f"{type(exc).__name__}: {exc}"
            if progress is not None:
                progress(traceback.format_exc())
        timings[check.name] = time.perf_counter() - t0
        entry = {
            "criterion": check.criterion,
            "name": check.name,
            "passed": bool(passed),
            "details": _plain(details),
            "artifacts": list(ctx.artifacts),
            "error": error,
        }
        entries.append(entry)
        if progress is not None:
            progress(f"[{'PASS' if passed else 'FAIL'}] {check.name} ({timings[check.name]:.1f} s)")
    timings["total"] = time.perf_counter() - t_start
    manifest = {
        "format": MANIFEST_FORMAT,
        "seed": seed,
        "invocation": invocation or {},
        "checks": entries,
        "passed": all(e["passed"] for e in entries),
    }
    if out is not None:
        write_json(out / "manifest.json", manifest)
        write_json(out / "timings.json", {"seconds": timings, "invocation": invocation or {}})
    return manifest, timings
