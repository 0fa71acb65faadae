"""Lipschitz constant estimators for ReLU networks.

Lower bounds come from formal gradient norms at chosen points. Upper bounds
come from the product of layer spectral norms. For ``d = 1`` and for
zero-bias networks with ``d = 2`` the exact value is computed by enumerating
linear regions.

For the l_p Lipschitz constant the gradient is measured in the conjugate
norm ``l_p'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    SummaryStats,
    as_stream,
    conjugate_exponent,
    format_p,
    lp_norm,
    lp_norm_rows,
    operator_norm_2,
    parse_p,
)
from .errors import ResourceLimitError, UnsupportedConfiguration
from .network import (
    NetworkParams,
    formal_gradient,
    forward,
    gradients_batch,
    patterns_batch,
    require_zero_bias,
    zero_bias_counterpart,
)

KINDS = ("lower", "upper", "exact")
SAMPLE_BLOCK = 4096
MAX_PIECES = 10**6
CIRCLE_GRID = 2**16
CIRCLE_TOL = 1e-12


@dataclass(frozen=True)
class LipEstimate:
    value: float
    p: float
    kind: str
    method: str
    budget: dict = field(default_factory=dict)
    seed: dict | None = None
    argmax: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.value >= 0:
            raise ValueError(f"estimate must be nonnegative, got {self.value}")

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "p": format_p(self.p),
            "kind": self.kind,
            "method": self.method,
            "budget": dict(self.budget),
            "seed": self.seed,
            "argmax": None if self.argmax is None else list(self.argmax),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LipEstimate":
        arg = data.get("argmax")
        return cls(
            float(data["value"]),
            parse_p(data["p"]),
            data["kind"],
            data["method"],
            dict(data.get("budget", {})),
            data.get("seed"),
            None if arg is None else tuple(float(v) for v in arg),
        )


@dataclass(frozen=True)
class GradNormSample:
    x: np.ndarray
    p_dual: float
    value: float


def _dual_norm_rows(G: np.ndarray, p: float) -> np.ndarray:
    return lp_norm_rows(G, conjugate_exponent(p))


def pointwise_grad_norm(net: NetworkParams, x, p) -> GradNormSample:
    p = parse_p(p)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x[None]
    if not np.any(x):
        raise ValueError("x must be nonzero")
    q = conjugate_exponent(p)
    return GradNormSample(x, q, lp_norm(formal_gradient(net, x), q))


# -- sampling ---------------------------------------------------------------------


def sample_points(d: int, n: int, rng, domain: str = "sphere", radius: float = 1.0) -> np.ndarray:
    """``n`` points on the sphere or in the ball of the given radius.

    Points come in fixed blocks from indexed substreams, so a request for
    ``n1 < n2`` points returns a prefix of the request for ``n2``.
    """
    if domain not in ("sphere", "ball"):
        raise ValueError(f"domain must be 'sphere' or 'ball', got {domain!r}")
    rng = as_stream(rng)
    blocks = []
    for b in range(-(-n // SAMPLE_BLOCK)):
        k = min(SAMPLE_BLOCK, n - b * SAMPLE_BLOCK)
        U = rng.spawn("dir", b).unit_vectors(SAMPLE_BLOCK, d)[:k]
        if domain == "ball":
            r = rng.spawn("rad", b).uniform(size=SAMPLE_BLOCK)[:k] ** (1.0 / d)
            U = U * r[:, None]
        blocks.append(U * radius)
    return np.concatenate(blocks) if blocks else np.empty((0, d))


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def smoothed_directional_derivative(net: NetworkParams, X, V, smoothing: float, temperatures=None):
    """``<grad Phi_s(x), v>`` for each row pair and its gradient in ``x``.

    ``Phi_s`` replaces each ReLU by a softplus whose temperature is
    ``smoothing`` times the RMS preactivation of that layer at that input. As
    ``smoothing -> 0`` this recovers the directional derivative of the
    network. The gradient is computed by reverse mode through the tangent
    recursion with the temperatures held fixed; pass ``temperatures`` (one
    column per layer) to evaluate at frozen values.
    """
    h, t = X, V
    S1, S2, ZD = [], [], []
    for j in range(net.L):
        z = h @ net.weights[j].T + net.biases[j]
        zd = t @ net.weights[j].T
        if temperatures is None:
            tau = smoothing * np.sqrt(np.mean(z * z, axis=1, keepdims=True)) + 1e-300
        else:
            tau = temperatures[j]
        a = z / tau
        s1 = _sigmoid(a)
        S1.append(s1)
        S2.append(s1 * (1.0 - s1) / tau)
        ZD.append(zd)
        h = tau * np.logaddexp(0.0, a)
        t = s1 * zd
    w = net.weights[net.L][0]
    F = t @ w
    ah = np.zeros_like(h)
    at = np.broadcast_to(w, t.shape)
    for j in range(net.L - 1, -1, -1):
        az = ah * S1[j] + at * ZD[j] * S2[j]
        azd = at * S1[j]
        ah = az @ net.weights[j]
        at = azd @ net.weights[j]
    return F, ah


def _directional_values(net, X, V) -> np.ndarray:
    return np.einsum("ij,ij->i", gradients_batch(net, X), V)


def directional_ascent(net: NetworkParams, X, V, steps: int = 60):
    """Push each row of ``X`` along its sphere (radius kept) to increase ``<grad Phi(x), v>``.

    Projected ascent on the smoothed objective with annealed temperature
    and step angle. Returns the best true directional values seen and the
    points where they occur.
    """
    X = np.array(X, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    r = np.linalg.norm(X, axis=1, keepdims=True)
    U = X / r
    best = _directional_values(net, X, V)
    best_x = X.copy()
    for s in range(steps):
        frac = s / max(steps - 1, 1)
        smoothing = 0.5 * 0.04**frac
        angle = 0.3 * (1 / 30) ** frac
        _, G = smoothed_directional_derivative(net, U * r, V, smoothing)
        G -= np.sum(G * U, axis=1, keepdims=True) * U
        G /= np.linalg.norm(G, axis=1, keepdims=True) + 1e-300
        U = np.cos(angle) * U + np.sin(angle) * G
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        vals = _directional_values(net, U * r, V)
        up = vals > best
        best[up] = vals[up]
        best_x[up] = (U * r)[up]
    return best, best_x


def dual_directions(G: np.ndarray, p: float) -> np.ndarray:
    """For each gradient row a direction ``v`` with ``||v||_p = 1`` maximizing ``<g, v>``."""
    G = np.atleast_2d(G)
    if p == 1:
        V = np.zeros_like(G)
        k = np.argmax(np.abs(G), axis=1)
        V[np.arange(len(G)), k] = np.sign(G[np.arange(len(G)), k])
        return V
    if math.isinf(p):
        return np.sign(G)
    q = conjugate_exponent(p)
    V = np.sign(G) * np.abs(G) ** (q - 1)
    n = lp_norm_rows(V, p)
    return V / np.where(n > 0, n, 1.0)[:, None]


def _ascent_rounds(net, X, p, steps, rounds, rng):
    """Alternate between dual directions and directional ascent; returns (values, points)."""
    if p == 1:
        # the l_inf norm of the gradient is a max over signed coordinate directions
        d = net.d
        V = np.concatenate([np.eye(d), -np.eye(d)])
        V = np.repeat(V, len(X), axis=0)
        starts = rng.spawn("coord").unit_vectors(len(V), d) * np.linalg.norm(X[0])
        _, Y = directional_ascent(net, starts, V, steps)
        return _dual_norm_rows(gradients_batch(net, Y), p), Y
    vals, pts = [], []
    for _ in range(rounds):
        V = dual_directions(gradients_batch(net, X), p)
        _, X = directional_ascent(net, X, V, steps)
        vals.append(_dual_norm_rows(gradients_batch(net, X), p))
        pts.append(X)
    return np.concatenate(vals), np.concatenate(pts)


def _basin_hop(net, x, value, p, hops, scale, rng):
    for h in range(hops):
        y = x + scale * np.linalg.norm(x) / math.sqrt(len(x)) * rng.spawn("hop", h).normal(len(x))
        y *= np.linalg.norm(x) / np.linalg.norm(y)
        v = float(_dual_norm_rows(gradients_batch(net, y[None]), p)[0])
        if v > value:
            x, value = y, v
    return x, value


def default_search_radius(net: NetworkParams) -> float:
    """Ball radius for biased networks: the larger of the large-norm radius and 10."""
    if net.is_zero_bias:
        return 1.0
    return max(large_norm_radius(net), 10.0)


def sampled_sup_grad_norm(
    net: NetworkParams,
    p,
    n_samples: int,
    rng=None,
    domain: str | None = None,
    radius: float | None = None,
    hops: int = 0,
    ascent_starts: int = 0,
    ascent_steps: int = 60,
    ascent_rounds: int = 3,
) -> LipEstimate:
    """Largest ``||grad Phi(x)||_p'`` over random points, a lower bound on ``lip_p``.

    With ``hops = ascent_starts = 0`` this is pure sampling and the value is
    nondecreasing in ``n_samples``. ``ascent_starts > 0`` refines the best
    samples by directional ascent; ``hops`` then perturbs the incumbent and
    keeps improvements.
    """
    p = parse_p(p)
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = as_stream(rng)
    if domain is None:
        domain = "sphere" if net.is_zero_bias else "ball"
    if radius is None:
        radius = 1.0 if domain == "sphere" else default_search_radius(net)
    X = sample_points(net.d, n_samples, rng.spawn("points"), domain, radius)
    vals = _dual_norm_rows(gradients_batch(net, X), p)
    i = int(np.argmax(vals))
    best, best_x = float(vals[i]), X[i]
    if ascent_starts > 0:
        top = X[np.argsort(vals, kind="stable")[::-1][:ascent_starts]]
        if domain == "ball":
            top = top * (radius / np.maximum(np.linalg.norm(top, axis=1, keepdims=True), 1e-300))
        v2, Y = _ascent_rounds(net, top, p, ascent_steps, ascent_rounds, rng.spawn("ascent"))
        j = int(np.argmax(v2))
        if v2[j] > best:
            best, best_x = float(v2[j]), Y[j]
    if hops > 0:
        best_x, best = _basin_hop(net, best_x, best, p, hops, 0.1, rng.spawn("hops"))
    budget = {
        "n_samples": n_samples,
        "domain": domain,
        "radius": radius,
        "hops": hops,
        "ascent_starts": ascent_starts,
        "ascent_steps": ascent_steps if ascent_starts else 0,
    }
    return LipEstimate(best, p, "lower", "sample", budget, rng.record(), tuple(float(v) for v in best_x))


def directional_sup(
    net: NetworkParams, nu, n_samples: int, rng=None, ascent_starts: int = 0, ascent_steps: int = 60
) -> float:
    """Largest ``<grad Phi(x), nu>`` over sphere samples (optionally refined by ascent)."""
    require_zero_bias(net, "directional_sup")
    nu = np.asarray(nu, dtype=np.float64)
    if nu.shape != (net.d,) or abs(np.linalg.norm(nu) - 1) > 1e-9:
        raise ValueError("nu must be a unit vector in the input space")
    rng = as_stream(rng)
    X = sample_points(net.d, n_samples, rng.spawn("points"))
    vals = gradients_batch(net, X) @ nu
    best = float(vals.max())
    if ascent_starts > 0:
        top = X[np.argsort(vals, kind="stable")[::-1][:ascent_starts]]
        v2, _ = directional_ascent(net, top, np.tile(nu, (len(top), 1)), ascent_steps)
        best = max(best, float(v2.max()))
    return best


# -- certified upper bound -------------------------------------------------------------------


def norm_conversion_factor(d: int, p: float) -> float:
    """Smallest ``c`` with ``||v||_2 <= c ||v||_p`` on R^d."""
    p = parse_p(p)
    if p <= 2:
        return 1.0
    return d ** (0.5 - (0.0 if math.isinf(p) else 1.0 / p))


def layerwise_upper_bound(net: NetworkParams, p=2) -> LipEstimate:
    p = parse_p(p)
    prod = 1.0
    for W in net.weights:
        prod *= operator_norm_2(W)
    factor = norm_conversion_factor(net.d, p)
    return LipEstimate(prod * factor, p, "upper", "layerwise", {"layers": net.L + 1, "norm_factor": factor})


# -- exact one-dimensional oracle ------------------------------------------------------------


def _interior_points(edges: np.ndarray) -> np.ndarray:
    lo, hi = edges[:-1], edges[1:]
    with np.errstate(invalid="ignore"):
        mid = 0.5 * (lo + hi)
    mid = np.where(np.isinf(lo) & np.isinf(hi), 0.0, mid)
    mid = np.where(np.isinf(lo) & ~np.isinf(hi), hi - 1.0, mid)
    mid = np.where(~np.isinf(lo) & np.isinf(hi), lo + 1.0, mid)
    return mid


def linear_pieces_1d(net: NetworkParams, a: float, b: float, max_pieces: int = MAX_PIECES):
    """Breakpoints and slopes of a ``d = 1`` network on ``[a, b]`` (endpoints may be infinite).

    Each hidden layer is kept as affine coefficients on every current piece;
    zero crossings of the next preactivations inside a piece split it.
    Returns ``(edges, slopes)`` with ``len(edges) == len(slopes) + 1``.
    """
    if net.d != 1:
        raise UnsupportedConfiguration("exact 1-D enumeration needs input dimension 1")
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    edges = np.array([a, b], dtype=np.float64)
    C = np.zeros((1, 1))  # intercepts, pieces x width
    S = np.ones((1, 1))  # slopes
    for j in range(net.L):
        W, bias = net.weights[j], net.biases[j]
        C = C @ W.T + bias
        S = S @ W.T
        new_edges = [edges[:1]]
        keep = []
        for k in range(len(edges) - 1):
            lo, hi = edges[k], edges[k + 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                roots = -C[k] / S[k]
            roots = np.unique(roots[(S[k] != 0) & (roots > lo) & (roots < hi)])
            new_edges.append(roots)
            new_edges.append(edges[k + 1:k + 2])
            keep.extend([k] * (len(roots) + 1))
        edges = np.concatenate(new_edges)
        if len(edges) - 1 > max_pieces:
            raise ResourceLimitError(f"more than {max_pieces} linear pieces")
        keep = np.array(keep)
        C, S = C[keep], S[keep]
        mid = _interior_points(edges)
        active = (C + S * mid[:, None]) > 0
        C = np.where(active, C, 0.0)
        S = np.where(active, S, 0.0)
    slopes = S @ net.weights[net.L][0]
    return edges, slopes


def breakpoint_hull(net: NetworkParams, pad: float = 1.0) -> tuple[float, float]:
    """A finite interval containing every breakpoint of a ``d = 1`` network, padded on both sides."""
    edges, _ = linear_pieces_1d(net, -math.inf, math.inf)
    inner = edges[1:-1]
    if inner.size == 0:
        return -pad, pad
    return float(inner.min() - pad), float(inner.max() + pad)


def exact_lip_1d(net: NetworkParams, interval=None) -> LipEstimate:
    """Largest absolute slope of a ``d = 1`` network over ``interval``.

    Zero-bias networks are positively homogeneous, so ``[-1, 1]`` already
    contains every slope and is used when no interval is given. Biased
    networks need an explicit interval (infinite endpoints are allowed).
    """
    if net.d != 1:
        raise UnsupportedConfiguration("exact_lip_1d needs input dimension 1")
    if interval is None:
        if not net.is_zero_bias:
            raise UnsupportedConfiguration("biased networks need an explicit interval")
        interval = (-1.0, 1.0)
    a, b = float(interval[0]), float(interval[1])
    edges, slopes = linear_pieces_1d(net, a, b)
    k = int(np.argmax(np.abs(slopes)))
    x = float(_interior_points(edges[k:k + 2])[0])
    budget = {"pieces": int(len(slopes)), "interval": [a, b]}
    # every p gives the same value in one dimension
    return LipEstimate(float(abs(slopes[k])), 2.0, "exact", "exact1d", budget, None, (x,))


# -- exact circle oracle ------------------------------------------------------------------------


def _pattern_keys(net: NetworkParams, angles: np.ndarray) -> np.ndarray:
    X = np.column_stack([np.cos(angles), np.sin(angles)])
    pats, _ = patterns_batch(net, X)
    bits = np.concatenate(pats, axis=1)
    return np.packbits(bits, axis=1)


def _boundaries(net, lo, hi, key_lo, key_hi, tol, out):
    # recursive bisection between two angles with different patterns
    stack = [(lo, hi, key_lo, key_hi)]
    while stack:
        lo, hi, klo, khi = stack.pop()
        if hi - lo <= tol:
            out.append(0.5 * (lo + hi))
            continue
        mid = 0.5 * (lo + hi)
        kmid = _pattern_keys(net, np.array([mid]))[0]
        if not np.array_equal(kmid, klo):
            stack.append((lo, mid, klo, kmid))
        if not np.array_equal(kmid, khi):
            stack.append((mid, hi, kmid, khi))


def exact_lip_circle(net: NetworkParams, p=2, angle_tol: float = CIRCLE_TOL, grid: int = CIRCLE_GRID) -> LipEstimate:
    """Largest ``||grad Phi||_p'`` over the unit circle for a zero-bias ``d = 2`` network.

    Activation regions of a zero-bias network are cones, so the gradient is
    constant on arcs of the circle. Pattern changes between neighbouring grid
    angles are bisected to ``angle_tol`` and the gradient is evaluated once
    per arc. Arcs narrower than the grid spacing can only be missed if they
    lie strictly between two grid angles with equal patterns.
    """
    if net.d != 2:
        raise UnsupportedConfiguration("exact_lip_circle needs input dimension 2")
    if not net.is_zero_bias:
        raise UnsupportedConfiguration("exact_lip_circle needs a zero-bias network")
    p = parse_p(p)
    theta = np.linspace(0.0, 2 * math.pi, grid, endpoint=False)
    keys = _pattern_keys(net, theta)
    nxt = np.roll(keys, -1, axis=0)
    change = np.flatnonzero(np.any(keys != nxt, axis=1))
    step = 2 * math.pi / grid
    cuts: list = []
    for k in change:
        _boundaries(net, theta[k], theta[k] + step, keys[k], nxt[k], angle_tol, cuts)
    cuts = np.sort(np.mod(np.array(cuts), 2 * math.pi))
    probes = [theta]
    if cuts.size:
        ext = np.append(cuts, cuts[0] + 2 * math.pi)
        probes.append(0.5 * (ext[:-1] + ext[1:]))
    ang = np.concatenate(probes)
    X = np.column_stack([np.cos(ang), np.sin(ang)])
    vals = _dual_norm_rows(gradients_batch(net, X), p)
    i = int(np.argmax(vals))
    budget = {"grid": grid, "angle_tol": angle_tol, "boundaries": int(cuts.size)}
    return LipEstimate(float(vals[i]), p, "exact", "circle", budget, None, tuple(float(v) for v in X[i]))


# -- isometry and large-norm gradient difference ------------------------------------------------


def isometry_ratio(net: NetworkParams, x, layer: int) -> float:
    """``||Phi^(layer)(x)||_2 / ||x||_2`` for the hidden layer output ``layer``."""
    require_zero_bias(net, "isometry_ratio")
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x)
    if not n > 0:
        raise ValueError("x must be nonzero")
    if not 0 <= layer < net.L:
        raise ValueError(f"layer must lie in [0, {net.L - 1}]")
    return float(np.linalg.norm(forward(net, x).acts[layer]) / n)


def realized_bias_scale(net: NetworkParams) -> float:
    """``sqrt(N / 2) * max |b|`` over the hidden biases."""
    return math.sqrt(net.N / 2) * net.max_abs_hidden_bias()


def large_norm_radius(net: NetworkParams) -> float:
    """``3^L * lam * N / (d L) / sqrt(ln(N / d))`` with ``lam`` the realized bias scale."""
    d, N, L = net.d, net.N, net.L
    if N <= d:
        raise UnsupportedConfiguration("the large-norm radius needs N > d")
    return 3.0**L * realized_bias_scale(net) * N / (d * L) / math.sqrt(math.log(N / d))


@dataclass(frozen=True)
class GradDiffResult:
    stats: SummaryStats
    radius: float
    bias_scale: float

    @property
    def sup(self) -> float:
        return self.stats.max

    def to_dict(self) -> dict:
        return {"stats": self.stats.to_dict(), "radius": self.radius, "bias_scale": self.bias_scale}


def grad_diff_large_norm(net: NetworkParams, n_samples: int, rng=None, radius: float | None = None) -> GradDiffResult:
    """Distribution of ``||grad Phi(x) - grad Phi0(x)||_2`` on the sphere of the large-norm radius.

    ``Phi0`` is the zero-bias counterpart. A zero-bias network gives exact
    zeros (radius reported as 1).
    """
    rng = as_stream(rng)
    if radius is None:
        radius = 1.0 if net.max_abs_hidden_bias() == 0 else large_norm_radius(net)
    X = sample_points(net.d, n_samples, rng.spawn("points"), "sphere", radius)
    diff = gradients_batch(net, X) - gradients_batch(zero_bias_counterpart(net), X)
    return GradDiffResult(SummaryStats.of(np.linalg.norm(diff, axis=1)), float(radius), realized_bias_scale(net))
