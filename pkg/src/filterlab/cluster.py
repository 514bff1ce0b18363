"""Cluster detection in a marked point process observed together with noise.

Observed points ``O = N + C``: Poisson noise ``N`` plus a cluster ``C`` whose
intensity depends on the cluster history.  Under the reference measure the
membership indicators are independent Bernoulli(``lambda_0 / (lambda_0 + gamma)``)
given ``O``, which gives three routes to the posterior: weighted Monte Carlo
over assignments, exact enumeration of all ``2^m`` assignments, and direct
integration of the normalized recursion on a closed family of functionals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from .errors import BudgetExceeded, ConfigurationError
from .grid import stream_keys, uniform_table
from .models import ClusterModel
from .oracle import bernoulli_table
from .stats import group_counts, group_sums, jackknife_ratio
from .weights import cluster_logweights

ENUMERATION_LIMIT = 20


@dataclass(frozen=True)
class ObservedPointSet:
    """Points sorted by time; equal times are ordered by mark and listed in ``ties``."""

    times: np.ndarray
    marks: np.ndarray
    horizon: float
    ties: tuple = ()

    @classmethod
    def from_points(cls, times, marks, horizon, labels=None):
        times = np.asarray(times, dtype=float)
        marks = np.asarray(marks, dtype=np.int64)
        order = np.lexsort((marks, times))
        times, marks = times[order], marks[order]
        ties = tuple(int(i) for i in np.flatnonzero(np.diff(times) == 0))
        pts = cls(times, marks, float(horizon), ties)
        if labels is None:
            return pts
        return pts, np.asarray(labels, dtype=np.int8)[order]

    def __len__(self) -> int:
        return len(self.times)

    def observed_by(self, t: float) -> int:
        """Number of points with time ``<= t``."""
        return int(np.searchsorted(self.times, t, side="right"))


class _Uniforms:
    """Sequential reader over a counter-based uniform stream."""

    def __init__(self, seed, tag, replicate, chunk=1024):
        self.key = stream_keys(seed, tag, [0], replicate)
        self.chunk = chunk
        self.pos = 0
        self.buf = np.empty(0)
        self.i = 0

    def __call__(self) -> float:
        if self.i >= len(self.buf):
            self.buf = uniform_table(self.key, self.pos, self.chunk)[:, 0]
            self.pos += self.chunk
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return float(u)


def _poisson_times(u, rate, horizon):
    t, out = 0.0, []
    if rate <= 0:
        return out
    while True:
        t += -np.log1p(-u()) / rate
        if t > horizon:
            return out
        out.append(t)


def _pick(u, probs):
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, u() * c[-1], side="right"), len(probs) - 1))


def simulate_cluster_P(model: ClusterModel, seed: int, replicate: int = 0):
    """Noise by Poisson marks; cluster by sequential thinning against ``lambda_0``.

    Returns the point set and the true membership labels.
    """
    T = model.horizon
    un = _Uniforms(seed, "cluster_noise", replicate)
    noise_rate = model.gamma * model.nu
    n_times = _poisson_times(un, noise_rate.sum(), T)
    n_marks = [_pick(un, noise_rate) for _ in n_times]
    uc = _Uniforms(seed, "cluster_signal", replicate)
    dom = model.lam0 * model.nu
    c_times, c_marks = [], []
    t_last, count = -np.inf, 0
    for t in _poisson_times(uc, dom.sum(), T):
        e = _pick(uc, dom)
        accept = model.rate(e, t, t_last, count) / model.lam0[e]
        if not 0.0 <= accept <= 1.0 + 1e-12:
            raise ConfigurationError(f"intensity exceeds lambda_0 at mark {e}", "model.params")
        if uc() < accept:
            c_times.append(t)
            c_marks.append(e)
            t_last, count = t, count + 1
    times = np.r_[n_times, c_times]
    marks = np.r_[n_marks, c_marks].astype(np.int64)
    labels = np.r_[np.zeros(len(n_times)), np.ones(len(c_times))]
    return ObservedPointSet.from_points(times, marks, T, labels)


def simulate_observations_Q(model: ClusterModel, seed: int, replicate: int = 0) -> ObservedPointSet:
    """Reference-measure points: Poisson with intensity ``(gamma + lambda_0) nu``."""
    u = _Uniforms(seed, "cluster_reference", replicate)
    rate = (model.gamma + model.lam0) * model.nu
    times = _poisson_times(u, rate.sum(), model.horizon)
    marks = [_pick(u, rate) for _ in times]
    return ObservedPointSet.from_points(times, marks, model.horizon)


def membership_prior(model: ClusterModel, obs: ObservedPointSet) -> np.ndarray:
    lam0 = model.lam0[obs.marks]
    return lam0 / (lam0 + model.gamma[obs.marks])


# --- functionals of the cluster history ------------------------------------------

_NAME = re.compile(r"^(one|theta\[(\d+)\]|theta0\[(\d+)\]|theta\[(\d+)\]theta0\[(\d+)\])$")


def battery_names(m: int, pairs: bool = True) -> list[str]:
    names = ["one"] + [f"theta[{i}]" for i in range(m)] + [f"theta0[{i}]" for i in range(m)]
    if pairs:
        names += [f"theta[{i}]theta0[{j}]" for i in range(m) for j in range(i + 1, m)]
    return names


def _parse(name: str):
    hit = _NAME.match(name)
    if not hit:
        raise ConfigurationError(f"unknown functional {name!r}", "functionals")
    if hit.group(1) == "one":
        return ("one",)
    if hit.group(2) is not None:
        return ("theta", int(hit.group(2)))
    if hit.group(3) is not None:
        return ("theta0", int(hit.group(3)))
    return ("pair", int(hit.group(4)), int(hit.group(5)))


def latest_member(theta: np.ndarray, k: int) -> np.ndarray:
    """Index of the latest cluster point among the first ``k`` points, or -1."""
    if k == 0:
        return np.full(theta.shape[0], -1)
    rev = theta[:, k - 1 :: -1] if k > 0 else theta[:, :0]
    has = rev.any(axis=1)
    return np.where(has, k - 1 - np.argmax(rev, axis=1), -1)


def functional_values(names, theta: np.ndarray, k: int) -> np.ndarray:
    """Values ``(K, F)`` of the functionals once the first ``k`` points are observed."""
    theta = np.atleast_2d(theta)
    K = theta.shape[0]
    latest = latest_member(theta, k)
    cols = []
    for name in names:
        p = _parse(name)
        if p[0] == "one":
            cols.append(np.ones(K))
        elif p[0] == "theta":
            cols.append(theta[:, p[1]].astype(float) if p[1] < k else np.zeros(K))
        elif p[0] == "theta0":
            cols.append((latest == p[1]).astype(float))
        else:
            i, j = p[1], p[2]
            on = theta[:, i] == 1 if i < k else np.zeros(K, bool)
            cols.append((on & (latest == j)).astype(float))
    return np.stack(cols, axis=1)


@dataclass
class ClusterPosterior:
    times: np.ndarray
    names: list
    values: np.ndarray  # (E, F) normalized posterior
    se: np.ndarray  # (E, F); zero when exact
    exact: bool
    rho_one: np.ndarray = field(default=None)  # unnormalized total mass per time

    def get(self, name: str, t_index: int = -1) -> float:
        return float(self.values[t_index, self.names.index(name)])

    def rows(self):
        for e, t in enumerate(self.times):
            for f, name in enumerate(self.names):
                yield (float(t), name, float(self.values[e, f]), float(self.se[e, f]), int(self.exact))


def default_times(obs: ObservedPointSet) -> np.ndarray:
    """Start, every observed point (after its jump), and the horizon."""
    return np.unique(np.r_[0.0, obs.times, obs.horizon])


def _assignments_draw(model, obs, N, seed, replicate):
    q = membership_prior(model, obs)
    keys = stream_keys(seed, "theta", np.arange(N), replicate)
    u = uniform_table(keys, 0, len(obs)) if len(obs) else np.empty((0, N))
    return (u.T < q).astype(np.int8)


def cluster_filter_mc(
    model: ClusterModel, obs: ObservedPointSet, N: int, seed: int, replicate: int = 0, times=None, names=None, groups=100
) -> ClusterPosterior:
    """Weighted average over ``N`` assignments drawn from the reference prior."""
    times = default_times(obs) if times is None else np.asarray(times, dtype=float)
    names = battery_names(len(obs)) if names is None else list(names)
    theta = _assignments_draw(model, obs, N, seed, replicate)
    logw = cluster_logweights(model, theta, obs.times, obs.marks, times)
    w = np.exp(logw)
    counts = group_counts(N, groups)
    vals = np.empty((len(times), len(names)))
    ses = np.empty_like(vals)
    rho1 = np.empty(len(times))
    for e, t in enumerate(times):
        f = functional_values(names, theta, obs.observed_by(t)) * w[:, e : e + 1]
        ws = group_sums(w[:, e], groups)
        v, s = jackknife_ratio(group_sums(f.T, groups), ws)
        vals[e], ses[e] = v, s
        rho1[e] = jackknife_ratio(ws, counts)[0]
    return ClusterPosterior(times, names, vals, ses, False, rho1)


def _enumerate(model, obs, budget):
    m = len(obs)
    if m > budget:
        raise BudgetExceeded(f"{m} points need 2^{m} assignments; limit is 2^{budget}")
    return bernoulli_table(membership_prior(model, obs))


def cluster_filter_exact(
    model: ClusterModel, obs: ObservedPointSet, times=None, names=None, budget: int = ENUMERATION_LIMIT
) -> ClusterPosterior:
    """Exact posterior by summing over all ``2^m`` membership assignments."""
    times = default_times(obs) if times is None else np.asarray(times, dtype=float)
    names = battery_names(len(obs)) if names is None else list(names)
    theta, prob = _enumerate(model, obs, budget)
    w = np.exp(cluster_logweights(model, theta, obs.times, obs.marks, times)) * prob[:, None]
    vals = np.empty((len(times), len(names)))
    rho1 = w.sum(axis=0)
    for e, t in enumerate(times):
        rho_f = w[:, e] @ functional_values(names, theta, obs.observed_by(t))
        vals[e] = rho_f / rho1[e]
    return ClusterPosterior(times, names, vals, np.zeros_like(vals), True, rho1)


def exact_rho(model, obs, times, names, budget=ENUMERATION_LIMIT) -> np.ndarray:
    """Unnormalized ``rho_t`` ``(E, F)`` by enumeration."""
    theta, prob = _enumerate(model, obs, budget)
    w = np.exp(cluster_logweights(model, theta, obs.times, obs.marks, times)) * prob[:, None]
    return np.stack([w[:, e] @ functional_values(names, theta, obs.observed_by(t)) for e, t in enumerate(times)])




def _history(model, theta, times, k):
    """``(t_last, count)`` per assignment after the first ``k`` points."""
    last = latest_member(theta, k)
    t_last = np.where(last >= 0, times[np.maximum(last, 0)] if len(times) else 0.0, -np.inf)
    return t_last, theta[:, :k].sum(axis=1)


def _excess_rate(model, t, t_last, count):
    """``sum_e nu_e (lambda_e - lambda_0(e))`` at time ``t``."""
    return sum(model.nu[e] * (model.rate(e, t, t_last, count) - model.lam0[e]) for e in range(model.n_marks))


def _breaks(model, a, b, t_lasts, counts):
    pts = {a, b}
    for tl, c in set(zip(np.ravel(t_lasts).tolist(), np.ravel(counts).tolist())):
        pts.update(model.kinks(a, b, tl, c))
    return sorted(pts)


@dataclass
class ZakaiCheck:
    times: np.ndarray
    names: list
    lhs: np.ndarray  # rho_t(phi) by enumeration
    rhs: np.ndarray  # rho_0 + drift integral + jump sum

    @property
    def residual(self) -> np.ndarray:
        return self.lhs - self.rhs

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def cluster_zakai_residual(model: ClusterModel, obs: ObservedPointSet, names=None, times=None, budget=ENUMERATION_LIMIT):
    """Check the unnormalized recursion term by term.

    ``rho_t(phi) = rho_0(phi) - int rho_s(phi sum_e nu_e (lambda_e - lambda_0(e))) ds
    + sum_{points <= t} q_i rho_{s-}(phi(. + delta) lambda(u_i, .)/lambda_0(u_i) - phi)``,
    ``q_i = lambda_0 / (lambda_0 + gamma)``.  Every ``rho`` is an enumeration
    sum; the time integral is adaptive quadrature of the pointwise intensity,
    split at its kinks, so it shares nothing with the closed-form integrals
    used by the weights.
    """
    times = default_times(obs) if times is None else np.asarray(times, dtype=float)
    names = battery_names(len(obs)) if names is None else list(names)
    theta, prob = _enumerate(model, obs, budget)
    q = membership_prior(model, obs)
    lhs = exact_rho(model, obs, times, names, budget)

    def weighted(s, k, left=False):
        w = np.exp(cluster_logweights(model, theta, obs.times, obs.marks, [s], left_limit=left)[:, 0])
        return w * prob

    def integrand(s, k):
        t_last, count = _history(model, theta, obs.times, k)
        return (weighted(s, k) * _excess_rate(model, s, t_last, count)) @ functional_values(names, theta, k)

    acc = prob @ functional_values(names, theta, 0)
    rhs = np.empty_like(lhs)
    t_done, k = 0.0, 0
    for e, t in enumerate(times):
        while True:
            upper = min(t, obs.times[k]) if k < len(obs) else t
            if upper > t_done:
                t_last, count = _history(model, theta, obs.times, k)
                pts = _breaks(model, t_done, upper, t_last, count)
                for a, b in zip(pts[:-1], pts[1:]):
                    val, _ = quad_vec(lambda s: integrand(s, k), a, b, epsabs=1e-15, epsrel=1e-13)
                    acc = acc - val
                t_done = upper
            if k < len(obs) and obs.times[k] <= t:
                s = obs.times[k]
                w = weighted(s, k, left=True)
                t_last, count = _history(model, theta, obs.times, k)
                ratio = np.broadcast_to(model.rate(obs.marks[k], s, t_last, count), count.shape) / model.lam0[obs.marks[k]]
                forced = theta.copy()
                forced[:, k] = 1
                jump = functional_values(names, forced, k + 1) * ratio[:, None] - functional_values(names, theta, k)
                acc = acc + q[k] * (w @ jump)
                k += 1
                continue
            break
        rhs[e] = acc
    return ZakaiCheck(times, names, lhs, rhs)


# --- normalized recursion on (latest cluster point, cluster size) ----------------


def _state_rates(model, s, obs, k):
    """Excess rate for every state ``(j, c)``: latest index ``j in -1..k-1``, size ``c in 0..k``."""
    j = np.arange(-1, k)[:, None]
    c = np.arange(k + 1)[None, :]
    t_last = np.where(j >= 0, obs.times[np.maximum(j, 0)] if k else 0.0, -np.inf)
    t_last, c = np.broadcast_arrays(t_last, c)
    return _excess_rate(model, s, t_last, c)


def _mark_rates(model, u, s, obs, k):
    j = np.arange(-1, k)[:, None]
    c = np.arange(k + 1)[None, :]
    t_last = np.where(j >= 0, obs.times[np.maximum(j, 0)] if k else 0.0, -np.inf)
    t_last, c = np.broadcast_arrays(t_last, c)
    return np.asarray(model.rate(u, s, t_last, c), dtype=float) + np.zeros(t_last.shape)


def _read(state, names, k):
    """Functional values from ``state[0] = P(j, c)`` and ``state[1+i] = P(theta_i = 1, j, c)``."""
    out = np.empty(len(names))
    for f, name in enumerate(names):
        p = _parse(name)
        if p[0] == "one":
            out[f] = state[0].sum()
        elif p[0] == "theta":
            out[f] = state[1 + p[1]].sum() if p[1] < k else 0.0
        elif p[0] == "theta0":
            out[f] = state[0][1 + p[1]].sum() if p[1] < k else 0.0
        else:
            i, j = p[1], p[2]
            out[f] = state[1 + i][1 + j].sum() if (i < k and j < k) else 0.0
    return out


def cluster_ks_recursion(model: ClusterModel, obs: ObservedPointSet, names=None, times=None, rtol=1e-12, atol=1e-15):
    """Normalized posterior by integrating its jump/drift recursion.

    Between points ``d pi(phi)/dt = -sum_e nu_e (pi(phi lambda_e) - pi(phi) pi(lambda_e))``,
    integrated with an explicit high-order Runge-Kutta method and split at
    intensity kinks.  At a point with mark ``u``:
    ``pi(phi) <- [gamma(u) pi(phi) + pi(phi(. + delta) lambda(u, .))] / (gamma(u) + pi(lambda(u, .)))``.
    The closed family is the law of (latest cluster point, cluster size),
    jointly with each membership indicator; its size grows as ``m^3``.
    """
    times = default_times(obs) if times is None else np.asarray(times, dtype=float)
    names = battery_names(len(obs)) if names is None else list(names)
    m = len(obs)
    state = np.zeros((1, 1, 1))
    state[0, 0, 0] = 1.0  # no point yet: j = -1, c = 0
    out = np.empty((len(times), len(names)))
    t_done, k, e = 0.0, 0, 0

    def flow(a, b, state, k):
        shape = state.shape

        def rhs(s, v):
            v = v.reshape(shape)
            r = _state_rates(model, s, obs, k)
            mean = np.sum(v[0] * r)
            return (-(v * (r - mean)[None])).ravel()

        pts = _breaks(model, a, b, *_all_histories(obs, k))
        for lo, hi in zip(pts[:-1], pts[1:]):
            sol = solve_ivp(rhs, (lo, hi), state.ravel(), method="DOP853", rtol=rtol, atol=atol)
            state = sol.y[:, -1].reshape(shape)
        return state

    while e < len(times):
        upper = min(times[e], obs.times[k]) if k < m else times[e]
        if upper > t_done:
            state = flow(t_done, upper, state, k)
            t_done = upper
        if k < m and obs.times[k] <= times[e]:
            state = _jump(model, obs, state, k)
            k += 1
            if k < m and obs.times[k] <= times[e]:
                continue
        while e < len(times) and times[e] <= t_done and (k == m or obs.times[k] > times[e]):
            out[e] = _read(state, names, k)
            e += 1
    return ClusterPosterior(times, names, out, np.zeros_like(out), True)


def _all_histories(obs, k):
    t_last = np.r_[-np.inf, obs.times[:k]]
    tl, c = np.meshgrid(t_last, np.arange(k + 1), indexing="ij")
    return tl, c


def _jump(model, obs, state, k):
    """Update at point ``k``; the state grows by one latest index, one size and one indicator."""
    u = obs.marks[k]
    s = obs.times[k]
    gamma = model.gamma[u]
    lam = _mark_rates(model, u, s, obs, k)  # (k+1, k+1)
    P = state[0]
    norm = gamma + np.sum(P * lam)
    if norm <= 0:
        raise ConfigurationError(f"point {k} has zero probability under the model", "points")
    new = np.zeros((k + 2, k + 2, k + 2))
    for a in range(k + 1):  # existing P and indicator joints
        new[a, : k + 1, : k + 1] = gamma * state[a]
        new[a, k + 1, 1:] = (state[a] * lam).sum(axis=0)
    new[k + 1, k + 1, 1:] = (P * lam).sum(axis=0)
    return new / norm


# --- batches of independent reference-measure replicates -------------------------


@dataclass
class ReplicateBatch:
    """Padded point sets ``(R, m_max)``; padding has ``valid = False`` and time ``T``."""

    times: np.ndarray
    marks: np.ndarray
    theta: np.ndarray
    valid: np.ndarray
    horizon: float

    @property
    def counts(self) -> np.ndarray:
        return self.valid.sum(axis=1)


def reference_replicates(model: ClusterModel, seed: int, replicates: int) -> ReplicateBatch:
    """``R`` independent point sets under the reference measure, with membership draws.

    Counts come from the Poisson quantile of one uniform; times are uniform order
    statistics, marks categorical, memberships Bernoulli(``lambda_0 / (lambda_0 + gamma)``).
    """
    from scipy.stats import poisson

    T = model.horizon
    rate = (model.gamma + model.lam0) * model.nu
    keys = stream_keys(seed, "cluster_batch", np.arange(replicates), 0)
    counts = poisson.ppf(uniform_table(keys, 0, 1)[0], rate.sum() * T).astype(np.int64)
    m = int(counts.max()) if replicates else 0
    tab = uniform_table(keys, 1, 3 * m) if m else np.empty((0, replicates))
    valid = np.arange(m)[None, :] < counts[:, None]
    times = np.where(valid, tab[0::3].T * T, T)
    cum = np.cumsum(rate) / rate.sum()
    marks = np.minimum(np.searchsorted(cum, tab[1::3].T, side="right"), len(rate) - 1)
    q = model.lam0 / (model.lam0 + model.gamma)
    theta = (tab[2::3].T < q[marks]) & valid
    order = np.argsort(times, axis=1, kind="stable")
    take = lambda a: np.take_along_axis(a, order, axis=1)  # noqa: E731
    return ReplicateBatch(take(times), take(marks), take(theta).astype(np.int8), take(valid), T)


def terminal_logweights(model: ClusterModel, batch: ReplicateBatch) -> np.ndarray:
    """``log L(T)`` for every replicate of a batch, one point column at a time."""
    R, m = batch.times.shape
    logw = np.zeros(R)
    t_last = np.full(R, -np.inf)
    count = np.zeros(R, dtype=np.int64)
    t_prev = np.zeros(R)
    for i in range(m):
        ti = batch.times[:, i]
        logw -= model.total_rate_integral(t_prev, ti, t_last, count)
        on = batch.theta[:, i] == 1
        u = batch.marks[:, i]
        with np.errstate(divide="ignore"):
            jump = np.log(np.broadcast_to(model.rate(u, ti, t_last, count), (R,)) / model.lam0[u])
        logw = np.where(on, logw + jump, logw)
        t_last = np.where(on, ti, t_last)
        count = count + on
        t_prev = ti
    return logw - model.total_rate_integral(t_prev, np.full(R, batch.horizon), t_last, count)
