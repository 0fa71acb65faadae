"""Randomized activation patterns and their independent surrogates.

``dbar`` patterns agree with the deterministic pattern wherever the
preactivation is nonzero and carry a fair coin at exact zeros. ``dhat``
patterns are fully independent fair coins. The functional samplers draw a
fresh network per trial and report either the spectral norm of a
pattern-weighted product applied to a fixed matrix, or the Euclidean norm of
the final row ``W_L D W ... D W``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import RngStream, as_stream, map_trials, operator_norm_2
from .network import BiasSpec, ForwardTrace, NetConfig, NetworkParams, forward, pattern_product

MODES = ("dbar", "dhat")


def dbar_from_trace(trace: ForwardTrace, rng: RngStream) -> list[np.ndarray]:
    """Randomized pattern for an existing trace; coins are drawn for every unit and used only at zeros."""
    out = []
    for j, z in enumerate(trace.preacts):
        coins = rng.spawn(j).bits(z.shape[0])
        out.append(np.where(z == 0.0, coins, trace.patterns[j]))
    return out


def sample_dbar(net: NetworkParams, x, rng) -> list[np.ndarray]:
    """Per-layer randomized pattern at ``x``.

    ``x = 0`` is accepted: with zero biases every preactivation then vanishes
    and every entry becomes a fair coin.
    """
    return dbar_from_trace(forward(net, x), as_stream(rng))


def sample_dhat(N: int, L: int, rng) -> list[np.ndarray]:
    if N < 1 or L < 1:
        raise ValueError(f"N and L must be positive, got N={N}, L={L}")
    rng = as_stream(rng)
    return [rng.spawn(j).bits(N) for j in range(L)]


def with_dead_unit(net: NetworkParams, layer: int, unit: int) -> NetworkParams:
    """Copy of ``net`` whose unit ``unit`` in hidden layer ``layer`` has an exactly zero preactivation."""
    if not (0 <= layer < net.L and 0 <= unit < net.N):
        raise ValueError(f"no hidden unit ({layer}, {unit}) in a network with L={net.L}, N={net.N}")
    weights = [np.array(W) for W in net.weights]
    biases = [np.array(b) for b in net.biases]
    weights[layer][unit, :] = 0.0
    biases[layer][unit] = 0.0
    return NetworkParams(tuple(weights), tuple(biases), net.bias_spec, net.variances, net.seed)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _z_list(cfg: NetConfig, z_points, mode: str) -> list | None:
    if mode == "dhat":
        return None
    if z_points is None:
        raise ValueError("dbar mode needs the evaluation points z_0, ..., z_{L-1}")
    z = np.asarray(z_points, dtype=np.float64)
    if z.ndim == 1:
        z = np.tile(z, (cfg.L, 1))
    if z.shape != (cfg.L, cfg.d):
        raise ValueError(f"z_points must have shape ({cfg.d},) or ({cfg.L}, {cfg.d}), got {z.shape}")
    return list(z)


def _trial_patterns(net: NetworkParams, mode: str, zs, l1: int, rng: RngStream) -> list:
    if mode == "dhat":
        return sample_dhat(net.N, net.L, rng)
    pats: list = [None] * net.L
    # one forward pass per distinct point; only layers >= l1 are used
    cache: dict = {}
    for i in range(l1, net.L):
        key = zs[i].tobytes()
        if key not in cache:
            cache[key] = forward(net, zs[i])
        pats[i] = dbar_from_trace(cache[key], rng.spawn("z", i))[i]
    return pats


def opnorm_functional_sample(
    cfg: NetConfig,
    l1: int,
    l2: int,
    A,
    n_trials: int,
    rng,
    mode: str = "dhat",
    z_points=None,
    threads: int | None = None,
) -> np.ndarray:
    """Spectral norms of ``[D_l2 W_l2 ... D_l1 W_l1] A`` over fresh networks.

    ``A`` is a constant matrix, so it cannot depend on layers ``>= l1``.
    """
    _check_mode(mode)
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if not (0 <= l1 <= cfg.L - 1 and -1 <= l2 <= cfg.L - 1):
        raise ValueError(f"layer indices out of range: l1={l1}, l2={l2} for L={cfg.L}")
    rows = cfg.d if l1 == 0 else cfg.N
    if A.ndim != 2 or A.shape[0] != rows:
        raise ValueError(f"A must have {rows} rows, got shape {A.shape}")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    zs = _z_list(cfg, z_points, mode)
    rng = as_stream(rng)

    def trial(t: int) -> float:
        s = rng.spawn(t)
        net = cfg.sample(s.spawn("net"))
        pats = _trial_patterns(net, mode, zs, l1, s.spawn("eps"))
        return operator_norm_2(pattern_product(net, pats, l1, l2, rhs=A))

    return np.array(map_trials(trial, n_trials, threads))


def final_layer_row(net: NetworkParams, patterns: Sequence, l1: int) -> np.ndarray:
    """``W_L D_{L-1} W_{L-1} ... D_l1 W_l1`` as a flat vector."""
    g = net.weights[net.L][0] * patterns[net.L - 1]
    for j in range(net.L - 1, l1, -1):
        g = (g @ net.weights[j]) * patterns[j - 1]
    return g @ net.weights[l1]


def final_layer_functional_sample(
    cfg: NetConfig,
    z_points,
    l1: int,
    n_trials: int,
    rng,
    mode: str = "dhat",
    threads: int | None = None,
) -> np.ndarray:
    """Euclidean norms of the final row ``W_L [prod D W]`` over fresh networks."""
    _check_mode(mode)
    if not 0 <= l1 <= cfg.L - 1:
        raise ValueError(f"l1 must lie in [0, {cfg.L - 1}], got {l1}")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    zs = _z_list(cfg, z_points, mode)
    rng = as_stream(rng)

    def trial(t: int) -> float:
        s = rng.spawn(t)
        net = cfg.sample(s.spawn("net"))
        pats = _trial_patterns(net, mode, zs, l1, s.spawn("eps"))
        return float(np.linalg.norm(final_layer_row(net, pats, l1)))

    return np.array(map_trials(trial, n_trials, threads))


def patterns_are_deterministic(trace: ForwardTrace) -> bool:
    """True when no preactivation and no hidden activation vector is exactly zero."""
    return all(np.all(z != 0.0) for z in trace.preacts) and all(np.any(a) for a in trace.acts)


def estimate_prob_all_patterns_deterministic(
    d: int, N: int, L: int, bias_spec, n_trials: int, rng, x=None
) -> float:
    """Fraction of fresh networks on which the randomized pattern at ``x`` is forced to equal the deterministic one."""
    if isinstance(bias_spec, str):
        bias_spec = BiasSpec.parse(bias_spec)
    cfg = NetConfig(d, N, L, bias_spec)
    x = np.ones(d) / np.sqrt(d) if x is None else np.asarray(x, dtype=np.float64)
    if not np.any(x):
        raise ValueError("the probe point must be nonzero")
    if cfg.bias_spec.kind == "fixed":
        raise ValueError("bias distribution must be symmetric (zero, gaussian or uniform)")
    rng = as_stream(rng)
    hits = sum(patterns_are_deterministic(forward(cfg.sample(rng.spawn(t)), x)) for t in range(n_trials))
    return hits / n_trials

