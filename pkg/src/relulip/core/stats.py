"""Summary statistics, the two-sample KS statistic and log-log fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

# c(alpha) in the large-sample two-sample KS critical value
# c(alpha) * sqrt((n + m) / (n * m)).
KS_C_ALPHA = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628, 0.001: 1.949}


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    std: float
    min: float
    max: float
    median: float
    q05: float
    q95: float

    @classmethod
    def of(cls, samples) -> "SummaryStats":
        a = np.asarray(samples, dtype=np.float64).ravel()
        if a.size == 0:
            raise ValueError("cannot summarize an empty sample")
        q05, med, q95 = np.quantile(a, [0.05, 0.5, 0.95])
        return cls(
            n=int(a.size),
            mean=float(a.mean()),
            std=float(a.std(ddof=1)) if a.size > 1 else 0.0,
            min=float(a.min()),
            max=float(a.max()),
            median=float(med),
            q05=float(q05),
            q95=float(q95),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def ks_two_sample(a, b) -> float:
    """sup_t |F_a(t) - F_b(t)| for the empirical CDFs of ``a`` and ``b``."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical_value(n: int, m: int, alpha: float = 0.01) -> float:
    return KS_C_ALPHA[alpha] * math.sqrt((n + m) / (n * m))


def fit_loglog_slope(xs, ys) -> tuple[float, float, float]:
    """Least-squares line through (ln x, ln y); returns (slope, intercept, rmse)."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("xs and ys must have equal length")
    if x.size < 2:
        raise ValueError("need at least two points for a fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("xs must not all be equal")
    X = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    rmse = float(np.sqrt(np.mean(resid**2)))
    return float(slope), float(intercept), rmse


def binomial_band(p: float, n: int, k: float = 3.0) -> float:
    """k standard deviations of a Binomial(n, p) frequency."""
    return k * math.sqrt(p * (1 - p) / n)
