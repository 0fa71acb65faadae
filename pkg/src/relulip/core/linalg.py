"""Dense matrix helpers: Gaussian matrices, l_p norms, spectral norm."""

from __future__ import annotations

import math

import numpy as np

from .rng import RngStream

# p = infinity is always the IEEE value math.inf and is dispatched on
# explicitly; no code path ever raises anything to an infinite power.
INF = math.inf


class PowerIterationError(RuntimeError):
    """Power iteration hit its iteration cap before reaching the tolerance."""

    def __init__(self, message, estimate, vector, iterations):
        super().__init__(message)
        self.estimate = estimate
        self.vector = vector
        self.iterations = iterations


def parse_p(p) -> float:
    """Accept ``1``, ``2.5``, ``inf``, ``"inf"`` or ``"infinity"``."""
    if isinstance(p, str):
        s = p.strip().lower()
        if s in ("inf", "infinity", "oo"):
            return INF
        p = float(s)
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ValueError(f"p must lie in [1, inf], got {p!r}")
    return p


def format_p(p: float) -> str:
    return "inf" if math.isinf(p) else repr(float(p))


def gaussian_matrix(rows: int, cols: int, variance: float, rng: RngStream) -> np.ndarray:
    """``rows x cols`` matrix of i.i.d. N(0, variance) entries."""
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    return rng.normal((int(rows), int(cols)), variance)


def lp_norm(v, p) -> float:
    p = parse_p(p)
    a = np.abs(np.asarray(v, dtype=np.float64)).ravel()
    if a.size == 0:
        return 0.0
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.sqrt(np.dot(a, a)))
    # scale by the max entry so a**p cannot overflow
    m = a.max()
    if m == 0:
        return 0.0
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


def lp_norm_rows(X, p) -> np.ndarray:
    """Row-wise l_p norms of a 2-D array."""
    p = parse_p(p)
    A = np.abs(np.asarray(X, dtype=np.float64))
    if math.isinf(p):
        return A.max(axis=1)
    if p == 1:
        return A.sum(axis=1)
    if p == 2:
        return np.sqrt(np.einsum("ij,ij->i", A, A))
    m = A.max(axis=1)
    safe = np.where(m > 0, m, 1.0)
    return m * np.sum((A / safe[:, None]) ** p, axis=1) ** (1.0 / p)


def conjugate_exponent(p) -> float:
    """The p' with 1/p + 1/p' = 1."""
    p = parse_p(p)
    if p == 1:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def operator_norm_2(A, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of ``A`` by power iteration on A^T A.

    The iteration runs on the smaller of A^T A and A A^T, starts from the
    normalized all-ones vector and stops once the relative change of the
    singular value estimate drops below ``tol``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.size == 0:
        raise ValueError("operator_norm_2 needs a nonempty matrix")
    if not tol > 0:
        raise ValueError("tol must be positive")
    M = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    n = M.shape[0]
    if not np.any(M):
        return 0.0

    v = np.full(n, 1.0 / math.sqrt(n))
    w = M @ v
    if not np.any(w):
        # all-ones start lies in the null space; use the column of largest norm
        v = M[:, int(np.argmax(np.einsum("ij,ij->j", M, M)))].copy()
        v /= np.linalg.norm(v)
        w = M @ v
    lam = float(v @ w)
    for it in range(1, max_iter + 1):
        nw = np.linalg.norm(w)
        v = w / nw
        w = M @ v
        lam_new = float(v @ w)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return math.sqrt(max(lam_new, 0.0))
        lam = lam_new
    raise PowerIterationError(
        f"power iteration did not reach tol={tol} within {max_iter} iterations",
        math.sqrt(max(lam, 0.0)), v, max_iter,
    )
