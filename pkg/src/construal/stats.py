"""Pooled regression helpers."""
from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np


@dataclass(frozen=True)
class OLSResult:
    slope: float
    intercept: float
    r_squared: float
    n: int


def ols_r2(predictor, responses) -> OLSResult:
    """Simple least-squares fit of ``responses`` on ``predictor``."""
    x = np.asarray(predictor, dtype=float)
    y = np.asarray(responses, dtype=float)
    if x.shape != y.shape:
        raise ValueError("predictor and responses differ in length")
    if x.size < 3:
        raise ValueError(f"need at least 3 points, got {x.size}")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-300 * max(1.0, x.size):
        raise ValueError("predictor has zero variance")
    yc = y - y.mean()
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    syy = float(yc @ yc)
    r2 = 0.0 if syy == 0.0 else float(np.clip((xc @ yc) ** 2 / (sxx * syy), 0.0, 1.0))
    return OLSResult(slope, intercept, r2, int(x.size))


def zscore(values) -> np.ndarray:
    """Population z-scores (divide by n).  Constant input maps to zeros."""
    x = np.asarray(values, dtype=float)
    sd = x.std()
    if x.size == 0 or sd == 0.0 or not np.isfinite(sd):
        warnings.warn("zero-variance column z-scored to zeros", RuntimeWarning, stacklevel=2)
        return np.zeros_like(x)
    return (x - x.mean()) / sd
