"""Impulse-response fit, numerical rank and boxplot summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedFitError(ValueError):
    """The reference impulse response is constant, so the fit is undefined."""


def fit(g_true, g_est) -> float:
    """Impulse-response fit in percent.

    ``100 * (1 - sqrt(sum (g - g_est)^2 / sum (g - mean(g))^2))``; 100 is a
    perfect match and the score is unbounded below.
    """
    g = np.asarray(g_true, dtype=float).ravel()
    gh = np.asarray(g_est, dtype=float).ravel()
    if g.shape != gh.shape:
        raise ValueError(f"length mismatch: {g.size} vs {gh.size}")
    err = g - gh
    dev = g - g.mean()
    den = float(dev @ dev)
    if den == 0.0:
        raise UndefinedFitError("true impulse response is constant")
    return 100.0 * (1.0 - np.sqrt(float(err @ err) / den))


def numerical_rank(X, rel_tol: float = 1e-8) -> int:
    """Number of singular values at least ``rel_tol * sigma_1``."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    s = np.linalg.svd(np.atleast_2d(np.asarray(X, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s >= rel_tol * s[0]))


@dataclass(frozen=True)
class DistSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    count: int
    outliers: tuple

    def as_dict(self) -> dict:
        return {
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "mean": self.mean,
            "count": self.count,
            "n_outliers": len(self.outliers),
        }


def summarize(values) -> DistSummary:
    """Five-number summary with linear-interpolation (type 7) quartiles.

    Outliers are the points outside ``[q1 - 1.5 IQR, q3 + 1.5 IQR]``.
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    outliers = tuple(float(v) for v in x if v < lo or v > hi)
    return DistSummary(
        min=float(x[0]),
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        max=float(x[-1]),
        mean=float(x.mean()),
        count=int(x.size),
        outliers=outliers,
    )
