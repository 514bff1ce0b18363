"""Block-wise particle propagation with exact and frozen-sensor weights.

Particles are advanced in fixed blocks with time as the inner loop.  Each
block draws its noise from counter-based streams keyed by particle index, so
a particle's path never depends on the block layout or the worker count.
Per-step reductions go through observers whose block partials are merged in
block order, which keeps every output bit-identical for any ``threads``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, ConfigurationError, SimulationBlowup
from .grid import TimeGrid, normal_table, stream_keys
from .models import SpatialModel

DEFAULT_BLOCK = 16384
DEFAULT_GROUPS = 100


def log_increment(h, dy, masses, span):
    """``h . dy - 1/2 sum_j mu_j h_j^2 span`` along the last axis."""
    return (h * dy).sum(-1) - 0.5 * (masses * h * h).sum(-1) * span


def euler_log_increment(h, dy):
    """Log of the Euler factor ``1 + h . dy`` of the linear weight equation."""
    g = (h * dy).sum(-1)
    if np.any(g <= -1.0):
        raise SimulationBlowup("Euler weight factor 1 + h.dy became non-positive")
    return np.log1p(g)


def advance(model, x, db, dy, dt, spatial, hx=None):
    """One Euler-Maruyama step; ``db`` is ``(K, d_B)``, ``dy`` ``(d_Y,)`` or ``(K, d_Y)``.

    Spatial models move with ``sigma dB + sum_j alpha_j dY_j`` and the drift
    ``b - sum_j alpha_j h_j mu_j``; ``hx`` may pass precomputed sensor values.
    """
    s = model.diffusion(x)
    if model.d_b == 1:
        noise = s[..., 0] * db
    else:
        noise = (s @ db[..., None])[..., 0]
    if spatial:
        al = model.kernel(x)  # (K, d_X, J)
        if hx is None:
            hx = model.sensor(x)
        shift = (al * (dy - hx * model.channel_masses * dt)[..., None, :]).sum(-1)
        return x + noise + shift + model.drift(x) * dt
    return x + noise + model.drift(x) * dt


def group_index(particles, total, groups):
    """Contiguous particle groups: particle ``k`` belongs to group ``k*G // N``."""
    return (np.asarray(particles, dtype=np.int64) * groups) // total


@dataclass
class StepView:
    """State handed to observers at fine index ``m`` (time ``t_m``, before the step)."""

    m: int
    t: float
    x: np.ndarray
    logw: np.ndarray
    hx: np.ndarray
    dy: np.ndarray | None


class Observer:
    """Per-step reduction over particles.  Subclasses keep block partials."""

    def start(self, particles, total):
        return None

    def step(self, state, view: StepView):
        pass

    def finish(self, states):
        return None


class WeightedSums(Observer):
    """Group sums of ``exp(logw) f(x)`` for each feature ``f`` at every fine step.

    A feature returns ``(K,)`` or ``(rows, K)``; rows are stacked in order.
    Result has shape ``(M+1, F, G)`` with ``F`` the total row count.  Group sums let callers bootstrap or
    jackknife over particle groups without keeping per-particle paths.
    """

    def __init__(self, features, groups=DEFAULT_GROUPS, steps=None):
        self.features = list(features)
        self.groups = groups
        self.steps = steps

    def start(self, particles, total):
        g = group_index(particles, total, min(self.groups, total))
        cuts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
        return {"g0": int(g[0]), "cuts": cuts, "ng": len(cuts), "rows": []}

    def step(self, state, view):
        if self.steps is not None and view.m not in self.steps:
            return
        w = np.exp(view.logw)
        vals = np.vstack([np.reshape(f(view.x, view.hx), (-1, len(w))) for f in self.features]) * w
        state["rows"].append(np.add.reduceat(vals, state["cuts"], axis=1))

    def finish(self, states):
        first = states[0]
        steps = len(first["rows"])
        G = max(s["g0"] + s["ng"] for s in states)
        out = np.zeros((steps, first["rows"][0].shape[0], G))
        for s in states:
            rows = np.asarray(s["rows"])
            out[:, :, s["g0"] : s["g0"] + s["ng"]] += rows
        return out


@dataclass
class EnsembleData:
    """Checkpointed particle states and weights for one replicate."""

    grid: TimeGrid
    n_particles: int
    n_set: tuple
    checkpoints: np.ndarray  # fine indices
    x: np.ndarray  # (C, N, d_X)
    logw: np.ndarray  # (C, N)
    logw_n: np.ndarray  # (C, len(n_set), N)
    y: np.ndarray | None  # (M+1, d_Y) shared path, or None in per-particle mode
    masses: np.ndarray
    observed: list = field(default_factory=list)
    scheme: str = "exp"
    seed: int = 0
    replicate: int = 0

    def index_of(self, t: float) -> int:
        k = self.grid.step_of(t)
        hit = np.flatnonzero(self.checkpoints == k)
        if not len(hit):
            raise ValueError(f"t={t} is not a stored checkpoint")
        return int(hit[0])


def _draw_initial(model, keys):
    z = normal_table(keys, 0, model.d_x).T
    return model.x0_mean + model.x0_std * z


def _run_block(job, particles):
    model, grid, N = job["model"], job["grid"], job["N"]
    spatial, scheme, chunk = job["spatial"], job["scheme"], job["chunk"]
    masses = job["masses"]
    M, dt = grid.fine_steps, grid.dt
    sqdt = math.sqrt(dt)
    K = len(particles)
    d_b, d_y = model.d_b, model.d_y
    skeys = stream_keys(job["seed"], "signal", particles, job["replicate"])
    x = _draw_initial(model, stream_keys(job["seed"], "init", particles, job["replicate"]))
    logw = np.zeros(K)
    strides = job["strides"]
    logw_n = [np.zeros(K) for _ in strides]
    h_frozen = [None] * len(strides)
    y_shared = job["y"]
    own_y = y_shared is None
    if own_y:
        okeys = stream_keys(job["seed"], "obs", particles, job["replicate"])
        y_now = np.zeros((K, d_y))
        y_tau = [np.zeros((K, d_y)) for _ in strides]
        scale = np.sqrt(masses) * sqdt
    ck = job["checkpoints"]
    ck_pos = {int(k): i for i, k in enumerate(ck)}
    C = len(ck)
    out_x = np.empty((C, K, model.d_x))
    out_l = np.empty((C, K))
    out_ln = np.empty((C, len(strides), K))
    observers = job["observers"]
    ostates = [o.start(particles, N) for o in observers]

    for m0 in range(0, M + 1, chunk):
        steps = min(chunk, M - m0)
        if steps > 0:
            db_tab = normal_table(skeys, m0 * d_b, steps * d_b).reshape(steps, d_b, K).transpose(0, 2, 1) * sqdt
            if own_y:
                dy_tab = normal_table(okeys, m0 * d_y, steps * d_y).reshape(steps, d_y, K).transpose(0, 2, 1) * scale
        for m in range(m0, min(m0 + chunk, M + 1)):
            hx = model.sensor(x)
            if own_y:
                y_m = y_now
            else:
                y_m = y_shared[m]
            for i, s in enumerate(strides):
                if m % s == 0:
                    if m > 0:
                        y_prev = y_tau[i] if own_y else y_shared[m - s]
                        logw_n[i] = logw_n[i] + log_increment(h_frozen[i], y_m - y_prev, masses, s * dt)
                    h_frozen[i] = hx
                    if own_y:
                        y_tau[i] = y_now
            if m < M:
                if own_y:
                    y_next = y_now + dy_tab[m - m0]
                    dy = y_next - y_now
                else:
                    dy = y_shared[m + 1] - y_shared[m]
            else:
                dy = None
            if observers:
                view = StepView(m, m * dt, x, logw, hx, dy)
                for o, st in zip(observers, ostates):
                    o.step(st, view)
            if m in ck_pos:
                c = ck_pos[m]
                out_x[c] = x
                out_l[c] = logw
                for i, s in enumerate(strides):
                    tau = (m // s) * s
                    if tau == m:
                        out_ln[c, i] = logw_n[i]
                    else:
                        y_prev = y_tau[i] if own_y else y_shared[tau]
                        out_ln[c, i] = logw_n[i] + log_increment(h_frozen[i], y_m - y_prev, masses, (m - tau) * dt)
            if m == M:
                break
            if scheme == "euler":
                logw = logw + euler_log_increment(hx, dy)
            else:
                logw = logw + log_increment(hx, dy, masses, dt)
            x = advance(model, x, db_tab[m - m0], dy, dt, spatial, hx)
            if own_y:
                y_now = y_next
        if not np.all(np.isfinite(x)):
            raise SimulationBlowup(f"non-finite signal state before step {m0 + steps}")
    return out_x, out_l, out_ln, ostates


def run_particles(
    model,
    grid: TimeGrid,
    n_particles: int,
    *,
    seed: int,
    replicate: int = 0,
    obs: np.ndarray | None = None,
    n_set=(),
    checkpoints=None,
    observers=(),
    scheme: str = "exp",
    block_size: int = DEFAULT_BLOCK,
    threads: int = 1,
    chunk: int = 64,
    budget: float | None = None,
) -> EnsembleData:
    """Propagate ``n_particles`` particles and their weights over ``grid``.

    ``obs`` is the shared observation path ``(M+1, d_Y)``.  With ``obs=None``
    every particle gets its own reference-measure observation path (used for
    martingale checks, where each particle is an independent replicate).
    ``checkpoints`` are fine indices (default: final time only).
    """
    N = int(n_particles)
    if N < 1:
        raise ConfigurationError("need at least one particle", "N")
    M = grid.fine_steps
    if budget is not None and N * M > budget:
        raise BudgetExceeded(f"N*M = {N * M:.3g} exceeds budget {budget:.3g}")
    if scheme not in ("exp", "euler"):
        raise ConfigurationError(f"unknown weight scheme {scheme!r}", "scheme")
    spatial = isinstance(model, SpatialModel)
    masses = np.asarray(model.channel_masses, dtype=float)
    if obs is not None:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (M + 1, model.d_y):
            raise ConfigurationError(
                f"observation path has shape {obs.shape}, expected {(M + 1, model.d_y)}", "obs"
            )
    elif observers:
        raise ConfigurationError("observers need a shared observation path", "obs")
    n_set = tuple(sorted(int(n) for n in n_set))
    strides = [grid.coarse_stride_for(n) for n in n_set]
    if checkpoints is None:
        checkpoints = [M]
    ck = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if ck.size and (ck[0] < 0 or ck[-1] > M):
        raise ConfigurationError("checkpoint outside the grid", "checkpoints")
    job = {
        "model": model,
        "grid": grid,
        "N": N,
        "spatial": spatial,
        "scheme": scheme,
        "chunk": max(1, int(chunk)),
        "masses": masses,
        "seed": int(seed),
        "replicate": int(replicate),
        "strides": strides,
        "y": obs,
        "checkpoints": ck,
        "observers": list(observers),
    }
    bounds = list(range(0, N, block_size)) + [N]
    blocks = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda p: _run_block(job, p), blocks))
    else:
        parts = [_run_block(job, p) for p in blocks]
    x = np.concatenate([p[0] for p in parts], axis=1)
    logw = np.concatenate([p[1] for p in parts], axis=1)
    logw_n = np.concatenate([p[2] for p in parts], axis=2)
    observed = [o.finish([p[3][i] for p in parts]) for i, o in enumerate(observers)]
    return EnsembleData(
        grid=grid,
        n_particles=N,
        n_set=n_set,
        checkpoints=ck,
        x=x,
        logw=logw,
        logw_n=logw_n,
        y=obs,
        masses=masses,
        observed=observed,
        scheme=scheme,
        seed=int(seed),
        replicate=int(replicate),
    )
