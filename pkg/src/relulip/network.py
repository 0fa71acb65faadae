"""Random fully connected ReLU networks and their formal gradient calculus.

A network with input dimension ``d``, ``L`` hidden layers of width ``N`` and a
scalar output is stored as ``L + 1`` weight matrices of shapes ``N x d``,
``N x N`` (``L - 1`` times) and ``1 x N`` plus ``L`` bias vectors and one
output bias. Layer ``j`` uses ``weights[j]`` and ``biases[j]``.

Activation patterns are 0/1 float vectors with a strict rule: a neuron is
active iff its preactivation is ``> 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import RngStream, as_stream, gaussian_matrix
from .errors import UnsupportedConfiguration

NETWORK_FORMAT = "relulip-network/1"


@dataclass(frozen=True)
class BiasSpec:
    """Bias distribution shared by every bias entry: zero, N(0, sigma^2) or U[-sigma, sigma].

    ``fixed`` labels hand-set deterministic biases; it cannot be sampled.
    """

    kind: str = "zero"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "gaussian", "uniform", "fixed"):
            raise ValueError(f"unknown bias kind {self.kind!r}")
        if self.kind in ("zero", "fixed"):
            object.__setattr__(self, "sigma", 0.0)
        elif not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"{self.kind} biases need a positive finite sigma, got {self.sigma!r}")

    @classmethod
    def parse(cls, text: str) -> "BiasSpec":
        """Parse ``zero``, ``gaussian:0.1`` or ``uniform:0.5``."""
        text = str(text).strip().lower()
        if text in ("zero", "fixed"):
            return cls(text)
        kind, sep, sigma = text.partition(":")
        if not sep:
            raise ValueError(f"bias spec must look like 'zero' or 'kind:sigma', got {text!r}")
        try:
            value = float(sigma)
        except ValueError:
            raise ValueError(f"bad sigma in bias spec {text!r}") from None
        return cls(kind, value)

    def __str__(self):
        return self.kind if self.kind in ("zero", "fixed") else f"{self.kind}:{self.sigma!r}"

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def small_ball_constant(self) -> float | None:
        """C_tau with P(b in (t - eps, t + eps)) <= C_tau * eps; ``None`` for zero biases."""
        if self.kind == "gaussian":
            return 2.0 / (self.sigma * math.sqrt(2.0 * math.pi))
        if self.kind == "uniform":
            return 1.0 / self.sigma
        return None

    def sample(self, size, rng: RngStream) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(size)
        if self.kind == "fixed":
            raise ValueError("fixed biases cannot be sampled")
        if self.kind == "gaussian":
            return rng.normal(size, self.sigma**2)
        return rng.uniform(-self.sigma, self.sigma, size)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkParams:
    weights: tuple
    biases: tuple
    bias_spec: BiasSpec = field(default_factory=BiasSpec)
    variances: tuple | None = None
    seed: dict | int | None = None

    def __post_init__(self):
        W = tuple(_frozen(w) for w in self.weights)
        if len(W) < 2:
            raise ValueError("a network needs at least one hidden layer (two weight matrices)")
        L = len(W) - 1
        if W[0].ndim != 2:
            raise ValueError("weight matrices must be 2-D")
        N, d = W[0].shape
        for j in range(1, L):
            if W[j].shape != (N, N):
                raise ValueError(f"weights[{j}] has shape {W[j].shape}, expected {(N, N)}")
        if W[L].shape != (1, N):
            raise ValueError(f"weights[{L}] has shape {W[L].shape}, expected {(1, N)}")
        if self.biases is None:
            b = tuple(_frozen(np.zeros(N)) for _ in range(L)) + (_frozen(np.zeros(1)),)
        else:
            b = tuple(_frozen(np.ravel(v)) for v in self.biases)
        if len(b) != L + 1:
            raise ValueError(f"expected {L + 1} bias vectors, got {len(b)}")
        for j in range(L):
            if b[j].shape != (N,):
                raise ValueError(f"biases[{j}] has shape {b[j].shape}, expected {(N,)}")
        if b[L].shape != (1,):
            raise ValueError("the output bias must be a single number")
        for a in W + b:
            if not np.all(np.isfinite(a)):
                raise ValueError("network parameters must be finite")
        variances = self.variances
        if variances is None:
            variances = tuple([2.0 / N] * L + [1.0])
        if len(variances) != L + 1:
            raise ValueError("need one variance parameter per weight matrix")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "variances", tuple(float(v) for v in variances))

    @property
    def d(self) -> int:
        return self.weights[0].shape[1]

    @property
    def N(self) -> int:
        return self.weights[0].shape[0]

    @property
    def L(self) -> int:
        return len(self.weights) - 1

    @property
    def is_zero_bias(self) -> bool:
        return all(not np.any(b) for b in self.biases)

    def max_abs_hidden_bias(self) -> float:
        return float(max(np.max(np.abs(b)) for b in self.biases[:-1]))

    def same_parameters(self, other: "NetworkParams") -> bool:
        return (
            len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": NETWORK_FORMAT,
            "d": self.d,
            "N": self.N,
            "L": self.L,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "bias_spec": str(self.bias_spec),
            "variances": list(self.variances),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkParams":
        try:
            d, N, L = int(data["d"]), int(data["N"]), int(data["L"])
            weights = [np.array(w, dtype=np.float64) for w in data["weights"]]
            biases = [np.array(b, dtype=np.float64) for b in data["biases"]]
            spec = BiasSpec.parse(data.get("bias_spec", "zero"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed network document: {exc}") from exc
        net = cls(weights, biases, spec, data.get("variances"), data.get("seed"))
        if (net.d, net.N, net.L) != (d, N, L):
            raise ValueError(
                f"shape metadata (d={d}, N={N}, L={L}) disagrees with the weight matrices"
            )
        return net

    def save(self, path) -> Path:
        path = Path(path)
        # json writes floats with repr(), which round-trips every double exactly
        path.write_text(json.dumps(self.to_dict(), allow_nan=False))
        return path

    @classmethod
    def load(cls, path) -> "NetworkParams":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a valid network file ({exc})") from exc
        if not isinstance(data, dict):
            raise ValueError(f"{path}: not a valid network file")
        return cls.from_dict(data)


def network_from_arrays(weights: Sequence, biases: Sequence | None = None) -> NetworkParams:
    """Hand-built network. ``biases`` may omit the output bias (taken as 0)."""
    if biases is not None:
        biases = [np.ravel(b) for b in biases]
        if len(biases) == len(weights) - 1:
            biases.append(np.zeros(1))
    net = NetworkParams(tuple(weights), biases, BiasSpec())
    if not net.is_zero_bias:
        object.__setattr__(net, "bias_spec", BiasSpec("fixed"))
    return net


@dataclass(frozen=True)
class NetConfig:
    d: int
    N: int
    L: int
    bias_spec: BiasSpec = field(default_factory=BiasSpec)

    def sample(self, rng) -> NetworkParams:
        return sample_network(self.d, self.N, self.L, self.bias_spec, rng)


def sample_network(d: int, N: int, L: int, bias_spec: BiasSpec | str | None = None, rng=None) -> NetworkParams:
    """Draw a network with hidden weights N(0, 2/N), output weights N(0, 1).

    Weights and biases come from separate substreams, so two networks sampled
    from the same stream with different bias specs share their weights.
    """
    for name, v in (("d", d), ("N", N), ("L", L)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    d, N, L = int(d), int(N), int(L)
    if bias_spec is None:
        bias_spec = BiasSpec()
    elif isinstance(bias_spec, str):
        bias_spec = BiasSpec.parse(bias_spec)
    rng = as_stream(rng)
    var = 2.0 / N
    weights = [gaussian_matrix(N, d, var, rng.spawn("W", 0))]
    weights += [gaussian_matrix(N, N, var, rng.spawn("W", j)) for j in range(1, L)]
    weights.append(gaussian_matrix(1, N, 1.0, rng.spawn("W", L)))
    biases = [bias_spec.sample(N, rng.spawn("b", j)) for j in range(L)]
    biases.append(bias_spec.sample(1, rng.spawn("b", L)))
    return NetworkParams(tuple(weights), tuple(biases), bias_spec, tuple([var] * L + [1.0]), rng.record())


def zero_bias_counterpart(net: NetworkParams) -> NetworkParams:
    if net.is_zero_bias and net.bias_spec.is_zero:
        return net
    return NetworkParams(net.weights, None, BiasSpec(), net.variances, net.seed)


# -- forward evaluation --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    x: np.ndarray
    preacts: tuple
    acts: tuple
    patterns: tuple
    output: float

    def min_abs_preact(self) -> float:
        return float(min(np.min(np.abs(z)) for z in self.preacts))


def _check_input(net: NetworkParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x[None]
    if x.shape != (net.d,):
        raise ValueError(f"input has shape {x.shape}, network expects ({net.d},)")
    return x


def forward(net: NetworkParams, x) -> ForwardTrace:
    x = _check_input(net, x)
    h = x
    pre, act, pat = [], [], []
    for j in range(net.L):
        z = net.weights[j] @ h + net.biases[j]
        mask = (z > 0).astype(np.float64)
        h = np.maximum(z, 0.0)
        pre.append(z)
        act.append(h)
        pat.append(mask)
    out = float(net.weights[net.L][0] @ h + net.biases[net.L][0])
    return ForwardTrace(x, tuple(pre), tuple(act), tuple(pat), out)


def _trace_of(net, trace_or_x) -> ForwardTrace:
    if isinstance(trace_or_x, ForwardTrace):
        return trace_or_x
    return forward(net, trace_or_x)


def formal_gradient(net: NetworkParams, trace) -> np.ndarray:
    """(W^(L) D^(L-1) W^(L-1) ... D^(0) W^(0))^T for the patterns in ``trace``."""
    trace = _trace_of(net, trace)
    g = net.weights[net.L][0] * trace.patterns[net.L - 1]
    for j in range(net.L - 1, 0, -1):
        g = (g @ net.weights[j]) * trace.patterns[j - 1]
    return g @ net.weights[0]


def patterns_batch(net: NetworkParams, X) -> tuple[list, np.ndarray]:
    """Activation patterns (one ``n x N`` bool array per layer) and outputs for rows of ``X``."""
    H = np.asarray(X, dtype=np.float64)
    pats = []
    for j in range(net.L):
        Z = H @ net.weights[j].T
        Z += net.biases[j]
        P = Z > 0
        pats.append(P)
        np.maximum(Z, 0.0, out=Z)
        H = Z
    out = H @ net.weights[net.L][0] + net.biases[net.L][0]
    return pats, out


def outputs_batch(net: NetworkParams, X, chunk: int = 4096) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.concatenate([patterns_batch(net, X[s:s + chunk])[1] for s in range(0, len(X), chunk)])


def _grads_from_patterns(net: NetworkParams, pats) -> np.ndarray:
    L = net.L
    g = pats[L - 1] * net.weights[L][0]
    for j in range(L - 1, 0, -1):
        g = g @ net.weights[j]
        g *= pats[j - 1]
    return g @ net.weights[0]


def gradients_batch(net: NetworkParams, X, chunk: int = 4096) -> np.ndarray:
    """Formal gradients at every row of ``X`` (shape ``n x d``)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.d:
        raise ValueError(f"inputs have {X.shape[1]} columns, network expects {net.d}")
    out = np.empty_like(X)
    for s in range(0, len(X), chunk):
        pats, _ = patterns_batch(net, X[s:s + chunk])
        out[s:s + chunk] = _grads_from_patterns(net, pats)
    return out


# -- partial Jacobians -----------------------------------------------------------


def pattern_product(net: NetworkParams, patterns: Sequence, l1: int, l2: int, rhs=None) -> np.ndarray:
    """Reverse-order product D_l2 W_l2 ... D_l1 W_l1, optionally applied to ``rhs``.

    ``patterns[j]`` is the 0/1 diagonal used for layer ``j``. The empty
    product (``l2 < l1``) is the identity on the input space of layer ``l1``.
    """
    L = net.L
    if not (0 <= l1 <= L and -1 <= l2 <= L - 1):
        raise ValueError(f"layer indices out of range: l1={l1}, l2={l2} for L={L}")
    dim_in = net.d if l1 == 0 else net.N
    if rhs is None:
        M = np.eye(dim_in)
    else:
        M = np.asarray(rhs, dtype=np.float64)
        if M.shape[0] != dim_in:
            raise ValueError(f"right-hand side has {M.shape[0]} rows, expected {dim_in}")
    for j in range(l1, l2 + 1):
        M = net.weights[j] @ M
        D = np.asarray(patterns[j], dtype=np.float64)
        M = D * M if M.ndim == 1 else D[:, None] * M
    return M


def _layer_patterns(net: NetworkParams, traces) -> list:
    if isinstance(traces, ForwardTrace):
        return list(traces.patterns)
    traces = list(traces)
    if len(traces) != net.L:
        raise ValueError(f"need one trace per hidden layer ({net.L}), got {len(traces)}")
    return [_trace_of(net, t).patterns[j] for j, t in enumerate(traces)]


def partial_jacobian(net: NetworkParams, traces, l1: int, l2: int, rhs=None) -> np.ndarray:
    """Formal Jacobian from layer ``l1`` to layer ``l2``.

    ``traces`` is a single :class:`ForwardTrace` (or input vector), or one per
    hidden layer when each layer's pattern is taken at a different input.
    """
    if isinstance(traces, np.ndarray) and traces.ndim == 1:
        traces = forward(net, traces)
    return pattern_product(net, _layer_patterns(net, traces), l1, l2, rhs)


# -- checks ------------------------------------------------------------------------


@dataclass(frozen=True)
class FDGradient:
    gradient: np.ndarray
    straddles: bool
    min_abs_preact: float


def finite_difference_gradient(net: NetworkParams, x, h: float = 1e-6) -> FDGradient:
    """Central differences of the network output, with an affine-region diagnostic.

    ``straddles`` is set when some preactivation at ``x`` is within ``10 h``
    of zero or when any probe point ``x +- h e_i`` has a different pattern;
    otherwise all probes share one affine piece and the differences are exact
    up to rounding.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x = _check_input(net, x)
    trace = forward(net, x)
    probes = np.concatenate([x + h * np.eye(net.d), x - h * np.eye(net.d)])
    pats, vals = patterns_batch(net, probes)
    grad = (vals[: net.d] - vals[net.d:]) / (2 * h)
    min_z = trace.min_abs_preact()
    straddles = min_z < 10 * h
    for j in range(net.L):
        if np.any(pats[j] != (trace.patterns[j] > 0)):
            straddles = True
    return FDGradient(grad, bool(straddles), min_z)


def telescoping_decomposition(net: NetworkParams, x, y, l1: int, l2: int):
    """Jacobian difference J(x) - J(y) and its per-layer telescoping terms.

    Term ``j`` is J^{(j+1)->(l2)}(x) (D_j(x) - D_j(y)) W_j J^{(l1)->(j-1)}(y).
    """
    tx, ty = _trace_of(net, x), _trace_of(net, y)
    px, py = list(tx.patterns), list(ty.patterns)
    diff = pattern_product(net, px, l1, l2) - pattern_product(net, py, l1, l2)
    terms = []
    for j in range(l1, l2 + 1):
        right = pattern_product(net, py, l1, j - 1)
        mid = (px[j] - py[j])[:, None] * (net.weights[j] @ right)
        terms.append(pattern_product(net, px, j + 1, l2, mid))
    return diff, terms


def telescoping_residual(net: NetworkParams, x, y, l1: int, l2: int) -> float:
    """Frobenius norm of (J(x) - J(y)) minus the sum of its telescoping terms."""
    if not (0 <= l1 <= net.L - 1 and -1 <= l2 <= net.L - 1):
        raise ValueError(f"layer indices out of range: l1={l1}, l2={l2} for L={net.L}")
    diff, terms = telescoping_decomposition(net, x, y, l1, l2)
    total = sum(terms) if terms else np.zeros_like(diff)
    return float(np.linalg.norm(diff - total))


def require_zero_bias(net: NetworkParams, what: str) -> None:
    if not net.is_zero_bias:
        raise UnsupportedConfiguration(f"{what} requires a zero-bias network")
