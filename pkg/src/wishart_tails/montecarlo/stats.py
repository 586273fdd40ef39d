"""Goodness-of-fit measures between samples and reference laws."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import special


def ks_statistic(samples, cdf: Callable) -> float:
    """sup |F_n - F| for a vectorized reference CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("KS statistic needs at least one sample")
    F = np.clip(np.asarray(cdf(x), dtype=float), 0.0, 1.0)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_critical(n: int, level: float = 0.01) -> float:
    """Asymptotic critical value of the one-sample KS distance at significance ``level``."""
    return float(special.kolmogi(level)) / math.sqrt(n)


def tv_distance(p, q) -> float:
    """Total variation between two discrete laws given as bin probabilities."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return 0.5 * float(np.sum(np.abs(p - q)))


def histogram_tv(hist, cdf: Callable) -> float:
    """TV between a histogram and a reference law, counting both tails as extra bins."""
    F = np.asarray(cdf(hist.edges), dtype=float)
    ref = np.concatenate([[F[0]], np.diff(F), [1.0 - F[-1]]])
    emp = np.concatenate([[hist.below], hist.counts, [hist.above]]) / hist.total
    return tv_distance(emp, ref)


def chi_square(counts, expected) -> tuple:
    """(statistic, degrees of freedom, p-value) for binned counts."""
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    stat = float(np.sum((counts - expected) ** 2 / expected))
    dof = counts.size - 1
    return stat, dof, float(special.chdtrc(dof, stat))
