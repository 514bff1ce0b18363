"""Resampling standard errors and regression helpers."""

from __future__ import annotations

import numpy as np


def group_sums(values, groups: int = 100, axis: int = -1):
    """Sum ``values`` over ``groups`` contiguous blocks along ``axis``."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    N = values.shape[-1]
    G = min(groups, N)
    cuts = np.flatnonzero(np.r_[True, np.diff((np.arange(N) * G) // N) != 0])
    return np.add.reduceat(values, cuts, axis=-1)


def group_counts(N: int, groups: int = 100) -> np.ndarray:
    G = min(groups, N)
    return np.bincount((np.arange(N) * G) // N, minlength=G).astype(float)


def jackknife_ratio(num_sums, den_sums, counts=None):
    """Delete-one-group jackknife for ``sum(num)/sum(den)``-type ratios.

    ``num_sums`` and ``den_sums`` have groups on the last axis; ``den_sums``
    may be counts (plain mean) or weight sums (self-normalized ratio).
    Groups are near-equal in size, so the equal-size formula is used.
    Returns ``(estimate, standard_error)``.
    """
    num_sums = np.asarray(num_sums, dtype=float)
    den_sums = np.asarray(den_sums, dtype=float)
    G = num_sums.shape[-1]
    est = num_sums.sum(-1) / den_sums.sum(-1)
    if G < 2:
        return est, np.full(np.shape(est), np.nan)
    loo = (num_sums.sum(-1, keepdims=True) - num_sums) / (den_sums.sum(-1, keepdims=True) - den_sums)
    var = (G - 1) / G * np.sum((loo - loo.mean(-1, keepdims=True)) ** 2, axis=-1)
    return est, np.sqrt(var)


def jackknife_mean(values, groups: int = 100, axis: int = -1):
    """Mean along ``axis`` with a grouped jackknife standard error."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    N = values.shape[-1]
    counts = group_counts(N, groups)
    sums = group_sums(values, groups)
    return jackknife_ratio(sums, np.broadcast_to(counts, sums.shape), counts)


def mean_se(values, axis: int = 0):
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    return values.mean(axis), values.std(axis, ddof=1) / np.sqrt(n)


def bootstrap_groups(stat, group_data, resamples: int = 200, seed: int = 0):
    """Bootstrap a statistic over groups.

    ``group_data`` is a sequence of arrays with groups on the last axis;
    ``stat`` maps resampled group arrays to an array.  Returns the standard
    deviation of ``stat`` over resamples.
    """
    rng = np.random.default_rng(seed)
    G = group_data[0].shape[-1]
    draws = []
    for _ in range(resamples):
        idx = rng.integers(0, G, G)
        draws.append(stat(*[g[..., idx] for g in group_data]))
    return np.std(np.asarray(draws), axis=0, ddof=1)


def variance_se(samples):
    """Sample variance and its standard error ``sqrt((m4 - s^4) / R)``."""
    x = np.asarray(samples, dtype=float)
    R = len(x)
    d = x - x.mean()
    var = d.var(ddof=1)
    m4 = np.mean(d**4)
    return var, np.sqrt(max(m4 - var**2, 0.0) / R)


def ols_slope(x, y):
    """Least-squares slope and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        return np.nan, np.nan
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    if len(x) < 3:
        return float(coef[0]), np.nan
    resid = y - A @ coef
    s2 = resid @ resid / (len(x) - 2)
    se = np.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    return float(coef[0]), float(se)


def loglog_slope(n, err):
    """Slope of ``log err`` against ``log n``."""
    return ols_slope(np.log(n), np.log(err))


def jackknife_statistic(stat, samples):
    """Delete-one jackknife estimate and SE of ``stat`` over the first axis of ``samples``."""
    samples = np.asarray(samples)
    R = samples.shape[0]
    full = np.asarray(stat(samples))
    loo = np.array([stat(np.delete(samples, i, axis=0)) for i in range(R)])
    se = np.sqrt((R - 1) / R * np.sum((loo - loo.mean(0)) ** 2, axis=0))
    return full, se
