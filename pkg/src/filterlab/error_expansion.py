"""First-order error of the frozen-sensor filter.

``rho^n = rho - U/n + o(1/n)``.  This module measures ``U^n = n (rho - rho^n)``
from particle ensembles built with common random numbers, checks the
sawtooth martingale ``R^n`` that drives the extra noise in the limit, and
fits convergence orders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import TimeGrid, normal_table, stream_keys
from .stats import group_counts, group_sums, jackknife_ratio, jackknife_statistic, loglog_slope, variance_se

SQRT3 = np.sqrt(3.0)


# --- the sawtooth martingale --------------------------------------------------


@dataclass(frozen=True)
class RPath:
    times: np.ndarray
    r: np.ndarray  # (M+1, d_Y)
    n: int


def sawtooth(grid: TimeGrid, n: int) -> np.ndarray:
    """``n (s - tau_n(s)) - 1/2`` at the left point of every fine step, shape ``(M,)``."""
    s = grid.coarse_stride_for(n)
    k = np.arange(grid.fine_steps)
    return (k % s) / s - 0.5


def r_increments(y, grid: TimeGrid, n: int) -> np.ndarray:
    """Fine-step increments of ``R^n``; ``y`` is ``(M+1, d)`` or ``(M+1, d, R)``."""
    y = np.asarray(y, dtype=float)
    dy = np.diff(y, axis=0)
    saw = sawtooth(grid, n).reshape((-1,) + (1,) * (dy.ndim - 1))
    return 2.0 * SQRT3 * saw * dy


def r_path(obs, grid: TimeGrid, n: int) -> RPath:
    """``R^n(t) = 2 sqrt(3) int_0^t (n (s - tau_n(s)) - 1/2) dY(s)`` as a left-point sum."""
    y = np.asarray(getattr(obs, "y", obs), dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != grid.fine_steps + 1:
        raise ConfigurationError("observation path does not match the grid", "obs")
    inc = r_increments(y, grid, n)
    return RPath(grid.times, np.concatenate([np.zeros((1, y.shape[1])), np.cumsum(inc, axis=0)]), n)


def quadratic_variation_sum(grid: TimeGrid, n: int, k: int) -> float:
    """Fine-grid sum ``sum 12 (n (s - tau_n(s)) - 1/2)^2 dt`` over ``[0, k/n]``."""
    s = grid.coarse_stride_for(n)
    saw = sawtooth(grid, n)[: k * s]
    return float(np.sum(12.0 * saw**2) * grid.dt)


def quadratic_variation_closed(grid: TimeGrid, n: int, k: int) -> float:
    """Closed form of the same sum: ``(k/n) (1 + 2/S^2)`` with ``S`` fine steps per coarse step."""
    s = grid.coarse_stride_for(n)
    return k / n * (1.0 + 2.0 / s**2)


def cross_variation_sum(grid: TimeGrid, n: int, k: int) -> float:
    """``sum 2 sqrt(3) (n (s - tau_n(s)) - 1/2) dt`` over ``[0, k/n]``; continuum value 0."""
    s = grid.coarse_stride_for(n)
    return float(np.sum(2.0 * SQRT3 * sawtooth(grid, n)[: k * s]) * grid.dt)


def cross_variation_closed(grid: TimeGrid, n: int, k: int) -> float:
    s = grid.coarse_stride_for(n)
    return -k * SQRT3 / (n * s)


def reference_paths(grid: TimeGrid, seed: int, replicates: int, d_y: int = 1, block: int = 512):
    """Endpoints ``Y(T)`` and the increments needed for ``R^n(T)``, generated in replicate blocks.

    Yields ``(first, y_inc)`` with ``y_inc`` of shape ``(M, d_y, b)``.
    """
    M = grid.fine_steps
    sq = np.sqrt(grid.dt)
    for a in range(0, replicates, block):
        idx = np.arange(a, min(a + block, replicates))
        keys = stream_keys(seed, "obs", idx, 0)
        z = normal_table(keys, 0, M * d_y).reshape(M, d_y, len(idx)) * sq
        yield a, z


@dataclass
class RLimitStats:
    n: int
    var: float
    var_se: float
    corr_y: float  # corr(Y^1(T), R^{n,1}(T))
    corr_y_se: float
    corr_rr: float  # corr(R^{n,1}(T), R^{n,2}(T)); nan for one channel
    corr_rr_se: float
    horizon: float

    @property
    def passed(self) -> dict:
        out = {
            "variance": abs(self.var - self.horizon) <= 0.05 * self.horizon,
            "corr_y": abs(self.corr_y) <= 4 * self.corr_y_se,
        }
        if np.isfinite(self.corr_rr):
            out["corr_rr"] = abs(self.corr_rr) <= 4 * self.corr_rr_se
        return out


def _corr(a, b):
    r = np.corrcoef(a, b)[0, 1]
    return float(r), float((1 - r * r) / np.sqrt(len(a) - 1))


def r_limit_test(grid: TimeGrid, n_values, replicates: int, seed: int, d_y: int = 2) -> list[RLimitStats]:
    """Moments of ``R^n(T)`` over independent reference observation paths."""
    n_values = list(n_values)
    saws = [sawtooth(grid, n) for n in n_values]
    yT = np.empty((replicates, d_y))
    rT = np.empty((len(n_values), replicates, d_y))
    for a, dy in reference_paths(grid, seed, replicates, d_y):
        b = a + dy.shape[-1]
        yT[a:b] = dy.sum(axis=0).T
        for i, saw in enumerate(saws):
            rT[i, a:b] = (2.0 * SQRT3 * np.einsum("m,mdr->rd", saw, dy))
    out = []
    for i, n in enumerate(n_values):
        var, var_se = variance_se(rT[i, :, 0])
        cy, cy_se = _corr(yT[:, 0], rT[i, :, 0])
        crr, crr_se = _corr(rT[i, :, 0], rT[i, :, 1]) if d_y > 1 else (np.nan, np.nan)
        out.append(RLimitStats(n, float(var), float(var_se), cy, cy_se, crr, crr_se, grid.horizon))
    return out


# --- U^n from particles -------------------------------------------------------


@dataclass
class ErrorSeries:
    """``U^n_t(phi) = n (rho_t(phi) - rho^n_t(phi))`` with jackknife standard errors."""

    times: np.ndarray
    phis: list
    n_values: list
    u: np.ndarray  # (P, n, C)
    se: np.ndarray  # (P, n, C)
    rho: np.ndarray  # (P, C) exact-weight estimates
    rho_n: np.ndarray  # (P, n, C)

    def abs_error(self) -> np.ndarray:
        """``|rho^n_t - rho_t|`` with shape ``(P, n, C)``."""
        return np.abs(self.rho_n - self.rho[:, None, :])

    def rows(self):
        for p, name in enumerate(self.phis):
            for i, n in enumerate(self.n_values):
                for c, t in enumerate(self.times):
                    yield (float(t), name, int(n), float(self.u[p, i, c]), float(self.se[p, i, c]))


def u_n_series(ensemble, phis, n_values=None, checkpoints=None) -> ErrorSeries:
    """Average of ``E^{k,n}_t = n phi(X_k(t)) (L_k(t) - L^n_k(t))`` over particles."""
    data = ensemble.data
    n_values = list(data.n_set if n_values is None else n_values)
    times = ensemble.grid.times[data.checkpoints] if checkpoints is None else np.atleast_1d(checkpoints)
    N, G = ensemble.N, ensemble.groups
    counts = group_counts(N, G)
    P, K, C = len(phis), len(n_values), len(times)
    u, se = np.empty((P, K, C)), np.empty((P, K, C))
    rho, rho_n = np.empty((P, C)), np.empty((P, K, C))
    for c, t in enumerate(times):
        x = ensemble.state(t)
        w = ensemble.weights(t)
        for i, n in enumerate(n_values):
            wn = ensemble.weights(t, n)
            diff = n * (w - wn)
            for p, phi in enumerate(phis):
                f = phi(x)
                u[p, i, c], se[p, i, c] = jackknife_ratio(group_sums(f * diff, G), counts)
                rho_n[p, i, c] = np.mean(f * wn)
        for p, phi in enumerate(phis):
            rho[p, c] = np.mean(phi(x) * w)
    return ErrorSeries(times, [phi.name for phi in phis], n_values, u, se, rho, rho_n)


def richardson(rho_n, rho_2n):
    """``2 rho^{2n} - rho^n``: cancels the ``1/n`` term of the expansion."""
    return 2.0 * np.asarray(rho_2n) - np.asarray(rho_n)


# --- replicate-level summaries ------------------------------------------------


@dataclass
class ConvergenceFit:
    phi: str
    n_values: np.ndarray
    error: np.ndarray  # RMS over replicates
    error_se: np.ndarray
    slope: float
    slope_se: float

    @property
    def defined(self) -> bool:
        return bool(np.isfinite(self.slope))


def rms_with_se(samples):
    """Root mean square over the first axis with a delta-method standard error."""
    s = np.asarray(samples, dtype=float) ** 2
    R = s.shape[0]
    ms = s.mean(axis=0)
    rms = np.sqrt(ms)
    se = s.std(axis=0, ddof=1) / np.sqrt(R) / (2 * np.where(rms > 0, rms, 1.0)) if R > 1 else np.full_like(rms, np.nan)
    return rms, se


def convergence_fit(phi: str, n_values, errors) -> ConvergenceFit:
    """Fit ``log RMS error`` against ``log n``; ``errors`` has shape ``(R, len(n_values))``."""
    n_values = np.asarray(n_values, dtype=float)
    rms, se = rms_with_se(errors)
    ok = rms > 0
    if ok.sum() < 2:
        return ConvergenceFit(phi, n_values, rms, se, np.nan, np.nan)
    slope, slope_se = loglog_slope(n_values[ok], rms[ok])
    return ConvergenceFit(phi, n_values, rms, se, slope, slope_se)


def sup_square_moment(u_paths):
    """Jackknife estimate and SE of ``E[sup_t U_t^2]`` from ``(R, C)`` replicate paths."""
    sup2 = np.max(np.square(np.asarray(u_paths, dtype=float)), axis=-1)
    return jackknife_statistic(lambda s: s.mean(axis=0), sup2)


def boundedness_ratio(sup_moments) -> np.ndarray:
    """Ratio of each ``E[sup U^2]`` to the first (smallest ``n``) entry."""
    m = np.asarray(sup_moments, dtype=float)
    return m / m[0]
