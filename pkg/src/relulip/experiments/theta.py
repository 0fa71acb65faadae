"""Per-layer pattern-difference terms between two nearby inputs.

For ``x, y`` on the sphere and a direction ``nu`` orthogonal to both, layer
``j`` contributes

    theta_j = J_{j+1 -> L-1}(x) (D_j(x) - D_j(y)) W_j J_{0 -> j-1}(y) nu,

a vector in R^N. Summed over ``j`` they telescope to the difference of the
hidden-layer Jacobians at ``x`` and ``y`` applied to ``nu``.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import RngStream, SummaryStats, map_trials
from ..network import NetworkParams, forward, pattern_product, require_zero_bias, sample_network
from .report import ScalingReport


def theta_pair(d: int, delta: float, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit ``x, y`` with last coordinate ``1/sqrt(2)``, ``||x - y|| = delta`` and a unit ``nu`` orthogonal to both."""
    if d < 3:
        raise ValueError("need d >= 3 to fit x, y and an orthogonal direction")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    r = 1 / math.sqrt(2)
    head = rng.spawn("u").unit_vectors(2, d - 1)
    u = head[0]
    w = head[1] - (head[1] @ u) * u
    w /= np.linalg.norm(w)
    # both heads have norm r, so the chord is 2 r sin(phi / 2)
    phi = 2 * math.asin(delta / (2 * r))
    x = np.append(r * u, r)
    y = np.append(r * (math.cos(phi) * u + math.sin(phi) * w), r)
    g = rng.spawn("nu").normal(d)
    Q, _ = np.linalg.qr(np.column_stack([x, y]))
    g -= Q @ (Q.T @ g)
    return x, y, g / np.linalg.norm(g)


def check_theta_geometry(x, y, nu, delta: float, tol: float = 1e-9) -> None:
    x, y, nu = (np.asarray(v, dtype=np.float64) for v in (x, y, nu))
    r = 1 / math.sqrt(2)
    if abs(x[-1] - r) > tol or abs(y[-1] - r) > tol:
        raise ValueError("x and y must have last coordinate 1/sqrt(2)")
    if abs(np.linalg.norm(x) - 1) > tol or abs(np.linalg.norm(y) - 1) > tol:
        raise ValueError("x and y must be unit vectors")
    dist = np.linalg.norm(x - y)
    if not delta * (1 - tol) <= dist <= 24 * delta * (1 + tol):
        raise ValueError(f"||x - y|| = {dist:g} outside [delta, 24 delta] for delta = {delta:g}")
    if abs(x @ nu) > tol or abs(y @ nu) > tol:
        raise ValueError("nu must be orthogonal to x and y")


def theta_vectors(net: NetworkParams, x, y, nu) -> list[np.ndarray]:
    """``theta_0, ..., theta_{L-1}`` for the given inputs and direction."""
    require_zero_bias(net, "theta_vectors")
    tx, ty = forward(net, x), forward(net, y)
    out = []
    for j in range(net.L):
        v = pattern_product(net, ty.patterns, 0, j - 1, rhs=nu)
        v = (tx.patterns[j] - ty.patterns[j]) * (net.weights[j] @ v)
        out.append(pattern_product(net, tx.patterns, j + 1, net.L - 1, rhs=v))
    return out


def run_theta_statistics(
    d: int, N: int, L: int, delta: float, trials: int, seed: int = 0, threads=None
) -> ScalingReport:
    """Medians of ``||theta_j||^2 / delta`` and ``|<theta_j, theta_k>|`` over fresh networks and pairs.

    Verdicts: ``theta_j = 0`` when ``x = y``, every median of
    ``||theta_j||^2 / delta`` in ``[0.05, 20]``, and each median cross term
    at most the smaller of the two median squared norms.
    """
    root = RngStream(seed, "theta")
    config = {"d": d, "N": N, "L": L, "delta": delta, "trials": trials, "seed": seed}
    report = ScalingReport("theta", config)

    def trial(t):
        s = root.spawn(t)
        net = sample_network(d, N, L, "zero", s.spawn("net"))
        x, y, nu = theta_pair(d, delta, s.spawn("pair"))
        check_theta_geometry(x, y, nu, delta)
        th = theta_vectors(net, x, y, nu)
        same = theta_vectors(net, x, x, nu)
        sq = [float(v @ v) for v in th]
        cross = {(j, k): abs(float(th[j] @ th[k])) for j in range(L) for k in range(j + 1, L)}
        return sq, cross, max(float(np.abs(v).max()) for v in same)

    out = map_trials(trial, trials, threads)
    sq = np.array([o[0] for o in out])
    zero_max = max(o[2] for o in out)
    report.add("zero_when_equal", zero_max == 0.0, f"max |theta_j| at x = y: {zero_max:g}")
    med_sq = np.median(sq, axis=0)
    ratios = med_sq / delta
    report.extra["median_sq_over_delta"] = ratios.tolist()
    report.extra["sq_over_delta"] = {str(j): SummaryStats.of(sq[:, j] / delta).to_dict() for j in range(L)}
    report.add(
        "norm_band",
        bool(np.all((ratios >= 0.05) & (ratios <= 20))),
        "median ||theta_j||^2/delta = " + ", ".join(f"{r:.4f}" for r in ratios) + " in [0.05, 20]",
    )
    details, ok = [], True
    med_cross = {}
    for j in range(L):
        for k in range(j + 1, L):
            m = float(np.median([o[1][(j, k)] for o in out]))
            med_cross[f"{j},{k}"] = m
            bound = float(min(med_sq[j], med_sq[k]))
            ok &= m <= bound
            details.append(f"({j},{k}): {m:.3e} <= {bound:.3e}")
    report.extra["median_cross"] = med_cross
    report.add("cross_subdominant", ok, "; ".join(details) or "single layer")
    return report
