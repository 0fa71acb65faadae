"""Random hyperplane tessellations: angular distance and sign-flip counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_stream, csv_text, map_trials, write_csv


@dataclass(frozen=True)
class FlipCountResult:
    m: int
    flips: int

    @property
    def fraction(self) -> float:
        return self.flips / self.m if self.m else 0.0

    def to_dict(self) -> dict:
        return {"m": self.m, "flips": self.flips, "fraction": self.fraction}


def _nonzero(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not n > 0:
        raise ValueError(f"{name} must be nonzero")
    return v / n


def angular_distance(x, y) -> float:
    x, y = _nonzero(x, "x"), _nonzero(y, "y")
    return float(np.arccos(np.clip(x @ y, -1.0, 1.0)) / np.pi)


def sign_flip_count(A, x, y, biases=None) -> FlipCountResult:
    """Rows of ``A`` whose (bias-shifted) sign differs at ``x`` and ``y``; ``sgn(0) = 0`` counts as different from +-1."""
    A = np.asarray(A, dtype=np.float64)
    u, v = A @ np.asarray(x, dtype=np.float64), A @ np.asarray(y, dtype=np.float64)
    if biases is not None:
        u = u + biases
        v = v + biases
    return FlipCountResult(A.shape[0], int(np.count_nonzero(np.sign(u) != np.sign(v))))


def bias_flip_large_norm(A, taus, x) -> FlipCountResult:
    """Rows where adding ``taus`` changes the sign of ``(Ax)_i``."""
    A = np.asarray(A, dtype=np.float64)
    z = A @ np.asarray(x, dtype=np.float64)
    return FlipCountResult(A.shape[0], int(np.count_nonzero(np.sign(z + taus) != np.sign(z))))


def orthonormal_direction(x: np.ndarray, rng) -> np.ndarray:
    """Random unit vector orthogonal to the unit vector ``x`` (Gram-Schmidt on a Gaussian draw)."""
    rng = as_stream(rng)
    if x.shape[0] < 2:
        raise ValueError("need dimension at least 2 for an orthogonal direction")
    while True:
        g = rng.normal(x.shape[0])
        g -= (g @ x) * x
        n = np.linalg.norm(g)
        if n > 1e-8:
            return g / n


def pair_at_angle(n: int, angle: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors ``x, y`` in R^n with angular distance ``angle`` (in units of pi)."""
    rng = as_stream(rng)
    x = rng.spawn("x").unit_vectors(1, n)[0]
    u = orthonormal_direction(x, rng.spawn("u"))
    t = np.pi * angle
    return x, np.cos(t) * x + np.sin(t) * u


@dataclass(frozen=True)
class FlipTableRow:
    angle: float
    mean_fraction: float
    std: float
    m: int
    trials: int


FLIP_TABLE_HEADER = ("angle", "mean_fraction", "std", "m", "trials")


def flip_fraction_vs_angle_experiment(n: int, m: int, angle_grid, n_trials: int, rng, threads=None) -> list[FlipTableRow]:
    """Mean flip fraction across fresh standard Gaussian ``m x n`` matrices for each target angle."""
    angles = [float(a) for a in angle_grid]
    if any(not 0 < a < 1 for a in angles):
        raise ValueError("angles must lie in (0, 1)")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    rng = as_stream(rng)
    rows = []
    for k, a in enumerate(angles):
        x, y = pair_at_angle(n, a, rng.spawn("pair", k))

        def trial(t, k=k, x=x, y=y):
            A = rng.spawn("A", k, t).normal((m, n))
            return sign_flip_count(A, x, y).fraction

        fr = np.array(map_trials(trial, n_trials, threads))
        rows.append(FlipTableRow(a, float(fr.mean()), float(fr.std(ddof=1)) if n_trials > 1 else 0.0, m, n_trials))
    return rows


def flip_table_csv(rows, comments=()) -> str:
    return csv_text(FLIP_TABLE_HEADER, [(r.angle, r.mean_fraction, r.std, r.m, r.trials) for r in rows], comments)


def write_flip_table(path, rows, comments=()):
    return write_csv(path, FLIP_TABLE_HEADER, [(r.angle, r.mean_fraction, r.std, r.m, r.trials) for r in rows], comments)


def close_pairs(n: int, eps: float, n_pairs: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Pairs on the unit sphere joined by a geodesic step of length ``eps`` in a random tangent direction.

    The chord ``||x - y||`` is ``2 sin(eps / 2) <= eps``.
    """
    rng = as_stream(rng)
    X = rng.spawn("x").unit_vectors(n_pairs, n)
    G = rng.spawn("u").normal((n_pairs, n))
    G -= np.sum(G * X, axis=1, keepdims=True) * X
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    Y = np.cos(eps) * X + np.sin(eps) * G
    return X, Y


def local_flip_max_experiment(n: int, m: int, eps: float, n_pairs: int, rng) -> float:
    """Largest flip fraction over ``n_pairs`` close pairs under one shared Gaussian ``m x n`` matrix."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    rng = as_stream(rng)
    if eps == 0:
        return 0.0
    A = rng.spawn("A").normal((m, n))
    X, Y = close_pairs(n, eps, n_pairs, rng.spawn("pairs"))
    flips = np.count_nonzero(np.sign(X @ A.T) != np.sign(Y @ A.T), axis=1)
    return float(flips.max() / m)

