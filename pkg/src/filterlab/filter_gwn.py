"""Weighted-particle filter for a diffusion observed in Gaussian white noise.

``rho_t(phi) ~ N^-1 sum_k phi(X_k(t)) L_k(t)`` and ``pi_t = rho_t / rho_t(1)``.
No resampling: every particle keeps its own weight for the whole horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import WeightedSums, run_particles
from .errors import ConfigurationError
from .grid import TimeGrid
from .models import SpatialModel, TestFunction, apply_generator, constant
from .stats import group_counts, group_sums, jackknife_ratio, loglog_slope

GROUPS = 100
BOOTSTRAP = 200


@dataclass
class ParticleEnsemble:
    """Particles sharing one observation path, with exact and frozen-sensor weights."""

    model: object
    data: object  # engine.EnsembleData
    tracked: dict = field(default_factory=dict)  # feature name -> row in the per-step sums
    groups: int = GROUPS

    @property
    def grid(self) -> TimeGrid:
        return self.data.grid

    @property
    def N(self) -> int:
        return self.data.n_particles

    @property
    def y(self) -> np.ndarray:
        return self.data.y

    @property
    def step_sums(self) -> np.ndarray:
        """``(M+1, F, G)`` group sums of ``L f(X)`` for the tracked features."""
        return self.data.observed[0]

    def state(self, t: float):
        return self.data.x[self.data.index_of(t)]

    def log_weights(self, t: float, n=None) -> np.ndarray:
        c = self.data.index_of(t)
        if n is None or n == "exact":
            return self.data.logw[c]
        try:
            i = self.data.n_set.index(int(n))
        except ValueError:
            raise ConfigurationError(f"n={n} was not computed; have {self.data.n_set}", "n_set") from None
        return self.data.logw_n[c, i]

    def weights(self, t: float, n=None) -> np.ndarray:
        return np.exp(self.log_weights(t, n))


@dataclass(frozen=True)
class FilterEstimate:
    t: float
    phi: str
    n: object
    rho: float
    pi: float
    rho_se: float
    pi_se: float
    particles: int


def _features(model, phi: TestFunction):
    """Per-step features a residual for ``phi`` needs: ``(names, fn)`` pairs."""
    spatial = isinstance(model, SpatialModel)
    tag = "g" if spatial else "h"

    def gains(x, hx, p=phi):
        g = p.value(x)[:, None] * hx
        if spatial:
            g = g + np.einsum("ki,kij->kj", p.grad(x), model.kernel(x))
        return g.T

    return [
        ([phi.name], lambda x, hx, p=phi: p.value(x)),
        ([f"A{phi.name}"], lambda x, hx, p=phi: apply_generator(model, p, x)),
        ([f"{phi.name}*{tag}{j}" for j in range(model.d_y)], gains),
    ]


def build_ensemble(
    model,
    grid: TimeGrid,
    N: int,
    n_set,
    master_seed: int,
    obs,
    *,
    checkpoints=None,
    replicate: int = 0,
    track=(),
    scheme: str = "exp",
    threads: int = 1,
    budget: float | None = None,
    groups: int = GROUPS,
    block_size: int | None = None,
) -> ParticleEnsemble:
    """Simulate ``N`` particles against the shared path ``obs``.

    ``checkpoints`` are times (default: ``T``).  ``track`` lists test
    functions whose residual features are reduced at every fine step.
    """
    y = getattr(obs, "y", obs)
    if checkpoints is None:
        checkpoints = [grid.horizon]
    ck = [grid.step_of(t) for t in np.atleast_1d(checkpoints)]
    feats = [(["one"], lambda x, hx: np.ones(x.shape[0])), ([f"h{j}" for j in range(model.d_y)], lambda x, hx: hx.T)]
    for phi in track:
        if phi.dim != model.d_x:
            raise ConfigurationError(f"test function {phi.name} has dim {phi.dim}", "phi")
        feats.extend(_features(model, phi))
    names = [n for group, _ in feats for n in group]
    observers = [WeightedSums([fn for _, fn in feats], groups=groups)] if track else []
    kw = {} if block_size is None else {"block_size": block_size}
    data = run_particles(
        model,
        grid,
        N,
        seed=master_seed,
        replicate=replicate,
        obs=y,
        n_set=n_set,
        checkpoints=ck,
        observers=observers,
        scheme=scheme,
        threads=threads,
        budget=budget,
        **kw,
    )
    tracked = {}
    for i, name in enumerate(names if track else ()):
        tracked.setdefault(name, i)
    return ParticleEnsemble(model, data, tracked, groups)


def rho(ensemble: ParticleEnsemble, phi: TestFunction, t: float, n=None) -> FilterEstimate:
    """Weighted average with grouped jackknife standard errors."""
    x = ensemble.state(t)
    w = ensemble.weights(t, n)
    N = len(w)
    f = phi(x) * w
    counts = group_counts(N, ensemble.groups)
    fs, ws = group_sums(f, ensemble.groups), group_sums(w, ensemble.groups)
    r, r_se = jackknife_ratio(fs, counts)
    p, p_se = jackknife_ratio(fs, ws)
    if N == 1:
        r, p = f[0], f[0] / w[0]
    return FilterEstimate(t, phi.name, "exact" if n is None else n, float(r), float(p), float(r_se), float(p_se), N)


def pi(ensemble, phi, t, n=None) -> float:
    return rho(ensemble, phi, t, n).pi


@dataclass(frozen=True)
class ResidualSeries:
    times: np.ndarray
    residual: np.ndarray
    se: np.ndarray
    kind: str
    phi: str

    def within(self, k: float = 4.0, atol: float = 1e-10) -> bool:
        """``|r| <= k se`` at every checkpoint; ``atol`` absorbs rounding in exact identities."""
        return bool(np.all(np.abs(self.residual) <= k * self.se + atol))

    def max_z(self, atol: float = 1e-10) -> float:
        r = np.where(np.abs(self.residual) <= atol, 0.0, np.abs(self.residual))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(r == 0, 0.0, r / self.se)
        return float(np.max(z))


def _resample_counts(G: int, resamples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.multinomial(G, np.full(G, 1.0 / G), size=resamples).astype(float)  # (B, G)


def _require(ensemble, names):
    missing = [n for n in names if n not in ensemble.tracked]
    if missing:
        raise ConfigurationError(f"features {missing} were not tracked; pass track=[phi] to build_ensemble", "track")
    return [ensemble.tracked[n] for n in names]


def _gain_names(ensemble, phi):
    tag = "g" if isinstance(ensemble.model, SpatialModel) else "h"
    return [f"{phi.name}*{tag}{j}" for j in range(ensemble.model.d_y)]


def _zakai_terms(S, iphi, iA, igain, dy, dt, cks, norm):
    """Residual at fine indices ``cks`` from per-step sums ``S (M+1, F, ...)``."""
    incr = S[:-1, iA] * dt + np.einsum("mj...,mj->m...", S[:-1, igain], dy)
    cum = np.concatenate([np.zeros((1,) + incr.shape[1:]), np.cumsum(incr, axis=0)])
    return (S[cks, iphi] - S[0, iphi] - cum[cks]) / norm


def zakai_residual(ensemble: ParticleEnsemble, phi: TestFunction, checkpoints, resamples=BOOTSTRAP, seed=0):
    """``rho_t(phi) - rho_0(phi) - sum rho_s(A phi) dt - sum rho_s(phi h) dy`` at ``checkpoints``.

    The standard error comes from a bootstrap over particle groups.  For
    spatial models the gain uses ``phi h(., u_j) + grad(phi).alpha(., u_j)``.
    """
    grid = ensemble.grid
    cks = np.array([grid.step_of(t) for t in np.atleast_1d(checkpoints)])
    iphi, iA = _require(ensemble, [phi.name, f"A{phi.name}"])
    igain = _require(ensemble, _gain_names(ensemble, phi))
    S = ensemble.step_sums
    dy = np.diff(ensemble.y, axis=0)
    N = ensemble.N
    r = _zakai_terms(S.sum(-1), iphi, iA, igain, dy, grid.dt, cks, N)
    per_group = _zakai_terms(S, iphi, iA, igain, dy, grid.dt, cks, N)  # (C, G)
    c = _resample_counts(S.shape[-1], resamples, seed)
    boot = per_group @ c.T  # (C, B)
    se = boot.std(axis=1, ddof=1)
    return ResidualSeries(grid.times[cks], r, se, "zakai", phi.name)


def _ks_terms(S, iphi, iA, igain, ione, ih, dy, dt, masses, cks):
    """KS residual from group-aggregated sums with trailing resample axis."""
    one = S[:, ione]
    p = S[:, iphi] / one
    pA = S[:, iA] / one
    pg = S[:, igain] / one[:, None]  # (M+1, J, ...)
    ph = S[:, ih] / one[:, None]
    mu = masses.reshape((-1,) + (1,) * (ph.ndim - 2))
    innov = dy - ph[:-1] * mu * dt
    gain = pg[:-1] - p[:-1, None] * ph[:-1]
    incr = pA[:-1] * dt + np.sum(gain * innov, axis=1)
    cum = np.concatenate([np.zeros((1,) + incr.shape[1:]), np.cumsum(incr, axis=0)])
    return p[cks] - p[0] - cum[cks]


def ks_residual(ensemble: ParticleEnsemble, phi: TestFunction, checkpoints, resamples=BOOTSTRAP, seed=0):
    """Normalized-filter residual in innovation form, ``dY - pi_s(h) mu dt``."""
    grid = ensemble.grid
    model = ensemble.model
    cks = np.array([grid.step_of(t) for t in np.atleast_1d(checkpoints)])
    iphi, iA, ione = _require(ensemble, [phi.name, f"A{phi.name}", "one"])
    igain = _require(ensemble, _gain_names(ensemble, phi))
    ih = _require(ensemble, [f"h{j}" for j in range(model.d_y)])
    S = ensemble.step_sums
    dy = np.diff(ensemble.y, axis=0)
    masses = np.asarray(model.channel_masses, dtype=float)
    r = _ks_terms(S.sum(-1), iphi, iA, igain, ione, ih, dy, grid.dt, masses, cks)
    c = _resample_counts(S.shape[-1], resamples, seed)
    Sb = S @ c.T  # (M+1, F, B)
    boot = _ks_terms(Sb, iphi, iA, igain, ione, ih, dy[..., None], grid.dt, masses, cks)
    se = boot.std(axis=-1, ddof=1)
    return ResidualSeries(grid.times[cks], r, se, "ks", phi.name)


def filter_path(ensemble: ParticleEnsemble, name: str) -> np.ndarray:
    """``pi_s(f)`` at every fine step for a tracked feature ``f``."""
    i, ione = _require(ensemble, [name, "one"])
    S = ensemble.step_sums.sum(-1)
    return S[:, i] / S[:, ione]


@dataclass(frozen=True)
class InnovationStats:
    mean: float
    mean_se: float
    var: float
    var_se: float
    autocorr: float
    autocorr_se: float
    horizon: float

    @property
    def passed(self) -> dict:
        return {
            "mean": abs(self.mean) <= 4 * self.mean_se,
            "variance": abs(self.var - self.horizon) <= 0.1 * self.horizon,
            "autocorrelation": abs(self.autocorr) <= 4 * self.autocorr_se,
        }


def innovation_statistics(innovations: np.ndarray, horizon: float, lags: int = 16) -> InnovationStats:
    """Brownian-null statistics of innovation paths ``(R, M+1)`` sampled on the fine grid."""
    from .stats import variance_se

    z = np.asarray(innovations, dtype=float)
    R, M1 = z.shape
    end = z[:, -1]
    mean, mean_se = end.mean(), end.std(ddof=1) / np.sqrt(R)
    var, var_se = variance_se(end)
    idx = np.linspace(0, M1 - 1, lags + 1).round().astype(int)
    inc = np.diff(z[:, idx], axis=1)
    inc = inc / inc.std()
    a, b = inc[:, :-1].ravel(), inc[:, 1:].ravel()
    prod = a * b
    ac = prod.mean() / np.mean(a * a)
    ac_se = prod.std(ddof=1) / np.sqrt(len(prod)) / np.mean(a * a)
    return InnovationStats(float(mean), float(mean_se), float(var), float(var_se), float(ac), float(ac_se), horizon)


def innovation_test(model, grid: TimeGrid, replicates: int, N: int, master_seed: int, threads: int = 1):
    """Simulate (X, Y) under the physical measure and test ``Y - int pi_s(h) ds``.

    Returns the statistics and the innovation paths ``(R, M+1)`` (first channel).
    """
    from .sde import simulate_pairs_P

    _, ys = simulate_pairs_P(model, grid, master_seed, replicates)
    paths = np.empty((replicates, grid.fine_steps + 1))
    for r in range(replicates):
        ens = build_ensemble(
            model, grid, N, (), master_seed, ys[:, r], replicate=r + 1, track=[constant(1.0, model.d_x)],
            threads=threads,
        )
        ph = filter_path(ens, "h0")
        comp = np.r_[0.0, np.cumsum(ph[:-1] * grid.dt)]
        paths[r] = ys[:, r, 0] - comp
    return innovation_statistics(paths, grid.horizon), paths


@dataclass(frozen=True)
class ExchangeableTable:
    sizes: np.ndarray
    sup_error: np.ndarray
    slope: float
    slope_se: float


def exchangeable_average_convergence(
    ensemble: ParticleEnsemble, phi: TestFunction, checkpoints, fractions=(8, 4, 2), subsets: int = 64, seed: int = 0
) -> ExchangeableTable:
    """Sup over checkpoints of ``|rho^{N'} - rho^N|`` for random sub-ensembles of size ``N' = N/f``.

    The RMS over ``subsets`` draws is divided by the finite-population factor
    ``sqrt(1 - N'/N)`` so that its slope against ``N'`` is ``-1/2``.
    """
    N = ensemble.N
    idx = [ensemble.data.index_of(t) for t in np.atleast_1d(checkpoints)]
    f = np.stack([phi(ensemble.data.x[c]) * np.exp(ensemble.data.logw[c]) for c in idx])  # (C, N)
    full = f.mean(axis=1)
    rng = np.random.default_rng(seed)
    sizes, errs = [], []
    for frac in fractions:
        n_sub = N // int(frac)
        if n_sub < 1:
            continue
        draws = []
        for _ in range(subsets if n_sub < N else 1):
            pick = rng.permutation(N)[:n_sub]
            draws.append(np.max(np.abs(f[:, pick].mean(axis=1) - full)))
        rms = np.sqrt(np.mean(np.square(draws)))
        fpc = np.sqrt(max(1.0 - n_sub / N, 0.0))
        sizes.append(n_sub)
        errs.append(rms / fpc if fpc > 0 else 0.0)
    sizes, errs = np.array(sizes), np.array(errs)
    ok = errs > 0
    slope, se = loglog_slope(sizes[ok], errs[ok]) if ok.sum() >= 2 else (np.nan, np.nan)
    return ExchangeableTable(sizes, errs, slope, se)


def estimate_rows(ensemble: ParticleEnsemble, phis, times, n_values=(None,)):
    """Long-format rows ``(t, phi_id, n, rho, pi, se)``."""
    rows = []
    for t in times:
        for phi in phis:
            for n in n_values:
                e = rho(ensemble, phi, t, n)
                rows.append((t, phi.name, e.n, e.rho, e.pi, e.rho_se))
    return rows
