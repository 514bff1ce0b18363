"""Likelihood-ratio weights stored as logs on the fine grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import euler_log_increment, log_increment
from .errors import ConfigurationError
from .grid import TimeGrid
from .models import ClusterModel, SpatialModel


@dataclass(frozen=True)
class WeightPath:
    times: np.ndarray
    logw: np.ndarray
    tag: str = "exact"

    @property
    def L(self) -> np.ndarray:
        return np.exp(self.logw)


def _check(signal, obs, grid, d_y):
    if signal.x.shape[0] != grid.fine_steps + 1 or obs.y.shape[0] != grid.fine_steps + 1:
        raise ConfigurationError("paths do not match the grid", "grid")
    if obs.y.shape[1] != d_y:
        raise ConfigurationError(f"observation has {obs.y.shape[1]} channels, model expects {d_y}", "obs")


def weight_exact(model, signal, obs, grid: TimeGrid, scheme: str = "exp") -> WeightPath:
    """Left-point log-weight ``l_{k+1} = l_k + h(x_k).dy - 1/2 |h(x_k)|^2 dt``.

    ``scheme="euler"`` accumulates ``log(1 + h(x_k).dy)`` instead.
    """
    _check(signal, obs, grid, model.d_y)
    h = model.sensor(signal.x[:-1])
    dy = obs.y[1:] - obs.y[:-1]
    if scheme == "euler":
        inc = euler_log_increment(h, dy)
    else:
        inc = log_increment(h, dy, np.asarray(model.channel_masses, dtype=float), grid.dt)
    return WeightPath(grid.times, np.r_[0.0, np.cumsum(inc)], "exact" if scheme == "exp" else "euler")


def weight_spatial(model: SpatialModel, signal, obs, grid: TimeGrid, scheme: str = "exp") -> WeightPath:
    """Cell-sum weight ``sum_j h(x, u_j) dy_j - 1/2 sum_j h^2 mu_j dt``."""
    if not isinstance(model, SpatialModel):
        raise ConfigurationError("weight_spatial needs a spatial model", "model")
    return weight_exact(model, signal, obs, grid, scheme)


def weight_picard(model, signal, obs, grid: TimeGrid, n: int) -> WeightPath:
    """Weight with the sensor frozen at the last coarse point ``floor(n s)/n``."""
    _check(signal, obs, grid, model.d_y)
    s = grid.coarse_stride_for(n)
    M, dt = grid.fine_steps, grid.dt
    masses = np.asarray(model.channel_masses, dtype=float)
    y = obs.y
    coarse = np.arange(0, M + 1, s)
    h = model.sensor(signal.x[coarse])
    inc = log_increment(h[:-1], y[coarse[1:]] - y[coarse[:-1]], masses, s * dt)
    at_coarse = np.r_[0.0, np.cumsum(inc)]
    k = np.arange(M + 1)
    tau = (k // s) * s
    j = k // s
    out = at_coarse[j].copy()
    off = tau != k
    out[off] = at_coarse[j[off]] + log_increment(h[j[off]], y[k[off]] - y[tau[off]], masses, (k[off] - tau[off]) * dt)
    return WeightPath(grid.times, out, f"picard({n})")


def cluster_logweights(model: ClusterModel, theta, times, marks, eval_times, left_limit: bool = False) -> np.ndarray:
    """Log-weights ``(K, len(eval_times))`` for ``K`` membership assignments ``theta (K, m)``.

    Jumps by ``log(lambda(u, eta_{s-}) / lambda_0(u))`` at points with
    ``theta = 1``; drifts by ``-int sum_e (lambda - lambda_0) nu ds`` using the
    intensity's closed-form integral.  ``left_limit`` evaluates ``L(t-)``.
    """
    times = np.asarray(times, dtype=float)
    marks = np.asarray(marks, dtype=np.int64)
    theta = np.atleast_2d(np.asarray(theta, dtype=np.int8))
    m = len(times)
    if theta.shape[1] != m or len(marks) != m:
        raise ConfigurationError("times, marks and theta differ in length", "points")
    if np.any(np.diff(times) < 0):
        raise ConfigurationError("observed points must be sorted by time", "points")
    eval_times = np.atleast_1d(np.asarray(eval_times, dtype=float))
    if np.any(np.diff(eval_times) < 0):
        raise ConfigurationError("evaluation times must be sorted", "times")
    K = theta.shape[0]
    out = np.empty((K, len(eval_times)))
    logw = np.zeros(K)
    t_last = np.full(K, -np.inf)
    count = np.zeros(K, dtype=np.int64)
    t_prev = 0.0
    side = "right" if left_limit else "left"
    start = 0
    for i in range(m + 1):
        stop = np.searchsorted(eval_times, times[i], side=side) if i < m else len(eval_times)
        for j in range(start, stop):
            out[:, j] = logw - model.total_rate_integral(t_prev, eval_times[j], t_last, count)
        start = stop
        if i == m:
            break
        t_next = times[i]
        logw = logw - model.total_rate_integral(t_prev, t_next, t_last, count)
        on = theta[:, i] == 1
        if np.any(on):
            u = marks[i]
            with np.errstate(divide="ignore"):
                jump = np.log(model.rate(u, t_next, t_last, count) / model.lam0[u])
            logw = np.where(on, logw + jump, logw)
            t_last = np.where(on, t_next, t_last)
            count = count + on
        t_prev = t_next
    return out


def weight_cluster(model: ClusterModel, theta, times, marks, eval_times) -> WeightPath:
    """Log-weight path of one membership assignment at ``eval_times``."""
    theta = np.asarray(theta, dtype=np.int8).reshape(1, -1)
    logw = cluster_logweights(model, theta, times, marks, eval_times)[0]
    return WeightPath(np.asarray(eval_times, dtype=float), logw, "cluster")
