"""Order statistics and moments with fixed, documented conventions."""
from __future__ import annotations

import numpy as np


def percentile(values, q):
    """Percentile(s) by linear interpolation between order statistics.

    For sorted ``x`` of length ``n`` the ``q``-th percentile sits at the
    fractional rank ``(n - 1) * q / 100``.  ``q`` may be a scalar or a
    sequence; the result has the same shape.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("percentile of empty input")
    q = np.asarray(q, dtype=float)
    pos = (x.size - 1) * q / 100.0
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, x.size - 1)
    frac = pos - lo
    return x[lo] + (x[hi] - x[lo]) * frac


def pop_std(values) -> float:
    return float(np.std(np.asarray(values, dtype=float)))


def skewness(values) -> float:
    """Sample skewness g1 = m3 / m2**1.5, defined as 0 for zero variance."""
    x = np.asarray(values, dtype=float)
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 <= 1e-24 * max(1.0, float(np.mean(x * x))):
        return 0.0
    return float(np.mean(d * d * d) / m2 ** 1.5)
