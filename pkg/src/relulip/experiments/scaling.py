"""Sweeps that turn asymptotic rates into slope, band and trend verdicts."""

from __future__ import annotations

import math

import numpy as np

from ..core import (
    INF,
    RngStream,
    SummaryStats,
    format_p,
    lp_norm,
    lp_norm_rows,
    map_trials,
    parse_p,
)
from ..lipschitz import directional_sup, sampled_sup_grad_norm
from ..network import BiasSpec, formal_gradient, sample_network
from .report import ScalingReport, Series, SweepConfig


def _point_net(cfg: SweepConfig, value, rng: RngStream):
    s = cfg.point(value)
    return sample_network(int(s["d"]), int(s["N"]), int(s["L"]), s.get("bias", "zero"), rng)


def _check_slope(report: ScalingReport, series: Series, expected: float, tol: float) -> None:
    fit = series.fit_slope()
    ok = abs(fit["slope"] - expected) <= tol
    report.add(
        f"slope[{series.label}]",
        ok,
        f"slope {fit['slope']:.4f}, expected {expected:g} +- {tol:g}",
    )


def pointwise_expected_slope(p: float) -> float:
    """Growth exponent of the l_p norm of the gradient at a fixed point, in d."""
    return 0.0 if math.isinf(p) else 1.0 / p


def run_pointwise_scaling(cfg: SweepConfig, threads=None) -> ScalingReport:
    """Mean of ``||grad Phi(x0)||_p`` at ``x0 = e_1`` over fresh networks, per d.

    ``fixed`` needs ``N``, ``L`` and ``p``; ``estimator`` may set
    ``expected_slope`` and ``slope_tol`` (default ``1/p`` and 0.1), or
    ``log_ratio_cv`` to check that ``mean / sqrt(ln d)`` has a bounded
    coefficient of variation across the grid. ``p = "ln_d"`` uses
    ``p = max(1, ln d)`` at each grid point.
    """
    if cfg.param != "d":
        raise ValueError("pointwise scaling sweeps d")
    log_regime = cfg.fixed["p"] == "ln_d"
    p = None if log_regime else parse_p(cfg.fixed["p"])
    root = RngStream(cfg.seed, "pointwise")
    report = ScalingReport("pointwise", cfg.to_dict())
    series = Series("p=ln_d" if log_regime else f"p={format_p(p)}", "d", [], [])
    for k, d in enumerate(cfg.grid):
        x0 = np.zeros(int(d))
        x0[0] = 1.0
        pk = max(1.0, math.log(d)) if log_regime else p

        def trial(t, k=k, d=d, x0=x0, pk=pk):
            net = _point_net(cfg, d, root.spawn(k, t))
            return lp_norm(formal_gradient(net, x0), pk)

        series.values.append(d)
        series.stats.append(SummaryStats.of(map_trials(trial, cfg.trials, threads)))
    report.series.append(series)
    est = cfg.estimator
    if "log_ratio_cv" in est:
        ratios = np.array([m / math.sqrt(math.log(d)) for m, d in zip(series.means, series.values)])
        cv = float(ratios.std(ddof=1) / ratios.mean())
        report.extra["log_ratios"] = ratios.tolist()
        report.add("log_ratio_cv", cv <= est["log_ratio_cv"], f"cv {cv:.4f} <= {est['log_ratio_cv']}")
        series.fit_slope()
    else:
        if log_regime:
            raise ValueError("p = ln_d needs the log_ratio_cv verdict")
        _check_slope(report, series, est.get("expected_slope", pointwise_expected_slope(p)), est.get("slope_tol", 0.1))
    return report


def expected_gaussian_norm(d: int, p: float) -> float | None:
    """Reference value for ``E ||g||_p`` of a standard Gaussian vector (p = 1, 2, inf)."""
    if p == 1:
        return d * math.sqrt(2 / math.pi)
    if p == 2:
        return math.sqrt(d)
    if math.isinf(p):
        return math.sqrt(2 * math.log(d))
    return None


GAUSSIAN_BANDS = {1.0: ("rel", 0.01), 2.0: ("rel", 0.02), INF: ("ratio", (0.7, 1.1))}


def run_gaussian_norm_check(d_grid, p_list, trials: int, rng=None, seed: int = 0) -> ScalingReport:
    """Monte Carlo ``E ||g||_p`` against the l_1, l_2 and l_inf reference values."""
    rng = RngStream(seed, "gaussian-norm") if rng is None else rng
    config = {"d_grid": list(d_grid), "p_list": [format_p(parse_p(p)) for p in p_list], "trials": trials, "seed": seed}
    report = ScalingReport("gaussian_norm", config)
    for p in map(parse_p, p_list):
        series = Series(f"p={format_p(p)}", "d", [], [])
        for d in d_grid:
            g = rng.spawn("g", int(d)).normal((trials, int(d)))
            norms = lp_norm_rows(g, p)
            series.values.append(d)
            series.stats.append(SummaryStats.of(norms))
            ref = expected_gaussian_norm(int(d), p)
            band = GAUSSIAN_BANDS.get(p)
            if band is None:
                continue
            mean = float(norms.mean())
            if band[0] == "rel":
                err = abs(mean - ref) / ref
                report.add(f"p={format_p(p)},d={d}", err <= band[1], f"mean {mean:.5f} vs {ref:.5f}, rel err {err:.5f} <= {band[1]}")
            else:
                ratio = mean / ref
                lo, hi = band[1]
                report.add(f"p={format_p(p)},d={d}", lo <= ratio <= hi, f"mean/sqrt(2 ln d) = {ratio:.4f} in [{lo}, {hi}]")
        report.series.append(series)
    return report


def shallow_expected_slope(p: float) -> float:
    if p <= 2:
        return 0.5
    return 1.0 if math.isinf(p) else 1.0 - 1.0 / p


def _search_options(est: dict) -> dict:
    keys = ("hops", "ascent_starts", "ascent_steps", "ascent_rounds")
    return {k: int(est[k]) for k in keys if k in est}


def run_shallow_matching(cfg: SweepConfig, threads=None) -> ScalingReport:
    """Sampled-sup lower estimates of ``lip_p`` for one-hidden-layer nets across d, one series per p.

    ``fixed`` needs ``L = 1``, ``width_factor`` (or ``N``) and ``p_list``.
    The same networks are reused for every p.
    """
    if cfg.param != "d":
        raise ValueError("shallow matching sweeps d")
    if int(cfg.fixed.get("L", 1)) != 1:
        raise ValueError("shallow matching needs L = 1")
    p_list = [parse_p(p) for p in cfg.fixed.get("p_list", [1, 2, "inf"])]
    est = cfg.estimator
    n_samples = int(est.get("n_samples", 10_000))
    opts = _search_options(est)
    tol = float(est.get("slope_tol", 0.15))
    root = RngStream(cfg.seed, "shallow")
    report = ScalingReport("shallow", cfg.to_dict())
    for i, p in enumerate(p_list):
        series = Series(f"p={format_p(p)}", "d", [], [])
        for k, d in enumerate(cfg.grid):

            def trial(t, k=k, d=d, i=i, p=p):
                net = _point_net(cfg, d, root.spawn("net", k, t))
                return sampled_sup_grad_norm(net, p, n_samples, root.spawn("search", i, k, t), **opts).value

            series.values.append(d)
            series.stats.append(SummaryStats.of(map_trials(trial, cfg.trials, threads)))
        report.series.append(series)
        _check_slope(report, series, shallow_expected_slope(p), tol)
    return report


def run_depth_dependence(cfg: SweepConfig, threads=None) -> ScalingReport:
    """Mean directional sup along ``e_1`` across depths with paired seeds.

    Trial ``t`` uses the same network stream and the same sample points at
    every depth, so first-layer weights and probes are shared. Verdicts: the
    means are nonincreasing in L and the first mean is at least
    ``floor_factor * sqrt(d)`` (default 0.05).
    """
    if cfg.param != "L":
        raise ValueError("depth dependence sweeps L")
    est = cfg.estimator
    n_samples = int(est.get("n_samples", 4096))
    starts = int(est.get("ascent_starts", 0))
    steps = int(est.get("ascent_steps", 60))
    floor = float(est.get("floor_factor", 0.05))
    root = RngStream(cfg.seed, "depth")
    report = ScalingReport("depth", cfg.to_dict())
    series = Series("directional", "L", [], [])
    d = int(cfg.fixed["d"])
    nu = np.zeros(d)
    nu[0] = 1.0
    per_trial = []
    for L in cfg.grid:

        def trial(t, L=L):
            net = _point_net(cfg, L, root.spawn("net", t))
            return directional_sup(net, nu, n_samples, root.spawn("search", t), starts, steps)

        vals = map_trials(trial, cfg.trials, threads)
        per_trial.append(vals)
        series.values.append(L)
        series.stats.append(SummaryStats.of(vals))
    report.series.append(series)
    means = series.means
    mono = all(b <= a for a, b in zip(means, means[1:]))
    report.add("nonincreasing_in_L", mono, "means " + ", ".join(f"L={L}: {m:.4f}" for L, m in zip(cfg.grid, means)))
    report.add("floor_at_first_L", means[0] >= floor * math.sqrt(d), f"{means[0]:.4f} >= {floor} * sqrt({d}) = {floor * math.sqrt(d):.4f}")
    report.extra["per_trial"] = per_trial
    return report


def _bounded_ratio(report: ScalingReport, name: str, ratios, factor: float) -> None:
    r = np.asarray(ratios, dtype=np.float64)
    spread = float(r.max() / r.min())
    report.extra[f"{name}_ratios"] = r.tolist()
    report.add(name, spread <= factor, f"max/min ratio {spread:.4f} <= {factor}")


def run_upper_boundedness(cfg: SweepConfig, threads=None) -> ScalingReport:
    """Sampled sup of ``||grad Phi||_2`` over the sphere divided by ``sqrt(d ln(N/d))`` across d."""
    if cfg.param != "d":
        raise ValueError("upper boundedness sweeps d")
    est = cfg.estimator
    n_samples = int(est.get("n_samples", 10_000))
    opts = _search_options(est)
    factor = float(est.get("ratio_factor", 3.0))
    root = RngStream(cfg.seed, "upper")
    report = ScalingReport("upper", cfg.to_dict())
    series = Series("p=2", "d", [], [])
    ratios = []
    for k, d in enumerate(cfg.grid):
        N = int(cfg.point(d)["N"])

        def trial(t, k=k, d=d):
            net = _point_net(cfg, d, root.spawn("net", k, t))
            return sampled_sup_grad_norm(net, 2, n_samples, root.spawn("search", k, t), **opts).value

        st = SummaryStats.of(map_trials(trial, cfg.trials, threads))
        series.values.append(d)
        series.stats.append(st)
        ratios.append(st.mean / math.sqrt(d * math.log(N / d)))
    report.series.append(series)
    _bounded_ratio(report, "bounded_ratio", ratios, factor)
    return report


def bias_upper_prediction(d: int, N: int, L: int, lam: float, c_tau: float) -> float:
    """``sqrt(d) * (sqrt(L) + sqrt(ln(lam * c_tau * N / d)))``."""
    return math.sqrt(d) * (math.sqrt(L) + math.sqrt(math.log(lam * c_tau * N / d)))


def run_bias_upper_check(cfg: SweepConfig, threads=None) -> ScalingReport:
    """Sampled sup of ``||grad Phi||_2`` over a ball for biased nets against the biased upper rate.

    ``lam`` is the realized largest hidden bias magnitude of each network.
    """
    if cfg.param != "d":
        raise ValueError("bias upper check sweeps d")
    spec = BiasSpec.parse(cfg.fixed.get("bias", "gaussian:0.1"))
    if spec.kind not in ("gaussian", "uniform"):
        raise ValueError("bias upper check needs gaussian or uniform biases")
    est = cfg.estimator
    n_samples = int(est.get("n_samples", 10_000))
    opts = _search_options(est)
    factor = float(est.get("ratio_factor", 3.0))
    root = RngStream(cfg.seed, "bias-upper")
    report = ScalingReport("bias_upper", cfg.to_dict())
    series = Series("p=2", "d", [], [])
    ratios, lams = [], []
    for k, d in enumerate(cfg.grid):
        s = cfg.point(d)
        N, L = int(s["N"]), int(s["L"])

        def trial(t, k=k, d=d):
            net = _point_net(cfg, d, root.spawn("net", k, t))
            v = sampled_sup_grad_norm(net, 2, n_samples, root.spawn("search", k, t), domain="ball", **opts).value
            return v, net.max_abs_hidden_bias()

        out = map_trials(trial, cfg.trials, threads)
        vals = [v for v, _ in out]
        lam = float(np.mean([b for _, b in out]))
        st = SummaryStats.of(vals)
        series.values.append(d)
        series.stats.append(st)
        lams.append(lam)
        ratios.append(st.mean / bias_upper_prediction(d, N, L, lam, spec.small_ball_constant))
    report.series.append(series)
    report.extra["lambda_realized_max_abs_bias"] = lams
    report.extra["small_ball_constant"] = spec.small_ball_constant
    _bounded_ratio(report, "bounded_ratio", ratios, factor)
    return report
