"""Euler-Maruyama signal and observation paths on the fine grid.

Single-path simulators draw from the same counter streams as the particle
engine, so ``simulate_signal`` with particle index ``k`` reproduces the
engine's particle ``k`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import advance, run_particles
from .errors import ConfigurationError, SimulationBlowup
from .grid import RngStream, TimeGrid, gaussian_increments, normal_table, stream_keys
from .models import SpatialModel


@dataclass(frozen=True)
class SignalPath:
    times: np.ndarray
    x: np.ndarray  # (M+1, d_X)
    model: str = ""
    stream: RngStream | None = None


@dataclass(frozen=True)
class ObservationPath:
    times: np.ndarray
    y: np.ndarray  # (M+1, d_Y)
    stream: RngStream | None = None

    @property
    def dy(self) -> np.ndarray:
        return np.diff(self.y, axis=0)


def initial_state(model, stream: RngStream) -> np.ndarray:
    keys = stream_keys(stream.master_seed, "init", [stream.particle], stream.replicate)
    z = normal_table(keys, 0, model.d_x).T
    return model.x0_mean + model.x0_std * z  # (1, d_X)


def _integrate(model, grid, stream, dy, spatial):
    db = gaussian_increments(stream, grid, model.d_b)
    x = initial_state(model, stream)
    path = np.empty((grid.fine_steps + 1, model.d_x))
    path[0] = x[0]
    for m in range(grid.fine_steps):
        x = advance(model, x, db[m][None, :], None if dy is None else dy[m], grid.dt, spatial)
        path[m + 1] = x[0]
    if not np.all(np.isfinite(path)):
        raise SimulationBlowup("non-finite signal state")
    return SignalPath(grid.times, path, model.name, stream)


def simulate_signal(model, grid: TimeGrid, stream: RngStream) -> SignalPath:
    """``x_{k+1} = x_k + sigma(x_k) dB + b(x_k) dt`` from the stream's B noise."""
    if isinstance(model, SpatialModel):
        raise ConfigurationError("spatial signals need an observation path", "model")
    return _integrate(model, grid, stream, None, False)


def simulate_signal_spatial(model: SpatialModel, grid: TimeGrid, stream: RngStream, obs: ObservationPath) -> SignalPath:
    """Signal driven by the observation channels with the reference-measure drift."""
    if obs.y.shape != (grid.fine_steps + 1, model.cells):
        raise ConfigurationError(
            f"observation path has {obs.y.shape[-1]} channels, model has {model.cells} cells", "obs"
        )
    return _integrate(model, grid, stream, obs.dy, True)


def simulate_observation_P(model, signal: SignalPath, grid: TimeGrid, stream: RngStream | None) -> ObservationPath:
    """``y_{k+1} = y_k + h(x_k) dt + dW``; ``stream=None`` freezes W at zero."""
    if signal.x.shape[0] != grid.fine_steps + 1:
        raise ConfigurationError("signal and grid lengths differ", "grid")
    drift = model.sensor(signal.x[:-1]) * grid.dt
    if stream is None:
        dw = np.zeros_like(drift)
    else:
        dw = gaussian_increments(stream, grid, model.d_y) * np.sqrt(model.channel_masses)
    y = np.vstack([np.zeros((1, model.d_y)), np.cumsum(drift + dw, axis=0)])
    return ObservationPath(grid.times, y, stream)


def simulate_observation_Q(grid: TimeGrid, stream: RngStream, d_y: int = 1, masses=None) -> ObservationPath:
    """Reference-measure observations: Brownian channels with variance ``mu_j`` per unit time."""
    dw = gaussian_increments(stream, grid, d_y)
    if masses is not None:
        dw = dw * np.sqrt(np.asarray(masses, dtype=float))
    y = np.vstack([np.zeros((1, d_y)), np.cumsum(dw, axis=0)])
    return ObservationPath(grid.times, y, stream)


def observation_for(model, grid: TimeGrid, seed: int, replicate: int = 0) -> ObservationPath:
    """The shared reference-measure path used by filter runs."""
    return simulate_observation_Q(grid, RngStream(seed, "obs", 0, replicate), model.d_y, model.channel_masses)


def simulate_signals(model, grid: TimeGrid, seed: int, count: int, replicate: int = 0, checkpoints=None, threads=1):
    """States of ``count`` independent signals at ``checkpoints``, shape ``(C, count, d_X)``."""
    if isinstance(model, SpatialModel):
        raise ConfigurationError("use the spatial ensemble for spatial signals", "model")
    data = run_particles(model, grid, count, seed=seed, replicate=replicate, checkpoints=checkpoints, threads=threads)
    return data.x


def simulate_pairs_P(model, grid: TimeGrid, seed: int, count: int, replicate: int = 0):
    """``count`` independent physical-measure (X, Y) pairs, shapes ``(M+1, count, d)``.

    Replicate ``r`` uses signal particle ``r`` and observation-noise particle ``r``.
    """
    M, dt = grid.fine_steps, grid.dt
    ids = np.arange(count)
    skeys = stream_keys(seed, "signal", ids, replicate)
    wkeys = stream_keys(seed, "obs_noise", ids, replicate)
    x = model.x0_mean + model.x0_std * normal_table(stream_keys(seed, "init", ids, replicate), 0, model.d_x).T
    xs = np.empty((M + 1, count, model.d_x))
    ys = np.zeros((M + 1, count, model.d_y))
    xs[0] = x
    sq = math.sqrt(dt) * np.sqrt(model.channel_masses)
    for m0 in range(0, M, 256):
        steps = min(256, M - m0)
        db = normal_table(skeys, m0 * model.d_b, steps * model.d_b).reshape(steps, model.d_b, count).transpose(0, 2, 1)
        dw = normal_table(wkeys, m0 * model.d_y, steps * model.d_y).reshape(steps, model.d_y, count).transpose(0, 2, 1)
        for j in range(steps):
            m = m0 + j
            ys[m + 1] = ys[m] + model.sensor(x) * dt + dw[j] * sq
            x = advance(model, x, db[j] * math.sqrt(dt), None, dt, False)
            xs[m + 1] = x
    return xs, ys
