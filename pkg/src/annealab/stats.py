"""Small statistics helpers: batch means, Wilson intervals."""

from __future__ import annotations

import math

import numpy as np

DEFAULT_BATCHES = 16
Z95 = 1.959963984540054


def batch_means(samples, n_batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a correlated series.

    The tail of the series that does not fill a whole batch is dropped
    from the error estimate but kept in the mean.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    mean = float(x.mean())
    nb = min(n_batches, x.size)
    if nb < 2:
        return mean, math.nan
    size = x.size // nb
    batches = x[: nb * size].reshape(nb, size).mean(axis=1)
    return mean, float(batches.std(ddof=1) / math.sqrt(nb))


def batch_variance(samples, n_batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Sample variance ``<x^2> - <x>^2`` with a batch-means error bar."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    var = float(x.var())
    nb = min(n_batches, x.size)
    if nb < 2 or x.size // nb < 2:
        return var, math.nan
    size = x.size // nb
    per_batch = x[: nb * size].reshape(nb, size).var(axis=1)
    return var, float(per_batch.std(ddof=1) / math.sqrt(nb))


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("need at least one trial")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi
