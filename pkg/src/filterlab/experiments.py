"""Experiment runners shared by the command line and the acceptance battery.

Every runner takes an ``ExperimentConfig`` and writes long-format CSV files
into ``cfg.out``; the returned dict maps file names to paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cluster import (
    cluster_filter_exact,
    cluster_filter_mc,
    cluster_ks_recursion,
    simulate_cluster_P,
)
from .engine import run_particles
from .error_expansion import (
    convergence_fit,
    r_increments,
    r_limit_test,
    richardson,
    sup_square_moment,
    u_n_series,
)
from .errors import BudgetExceeded, ConfigurationError
from .filter_gwn import ParticleEnsemble, build_ensemble, ks_residual, rho, zakai_residual
from .galerkin import (
    NodalBasis,
    NodalSources,
    PolynomialBasis,
    galerkin_nodal,
    galerkin_polynomial,
    polynomial_sources,
)
from .grid import RngStream, normal_table, stream_keys
from .io import path_rows, write_csv
from .models import battery
from .oracle import kalman_for_model
from .sde import observation_for, simulate_observation_P, simulate_signal

RESIDUAL_HEADER = ["t", "phi_id", "kind", "residual", "se", "lower", "upper"]
ESTIMATE_HEADER = ["t", "phi_id", "n", "rho", "pi", "se"]


def _out(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _budget(cfg):
    return cfg.budget.particle_steps


# --- simulate ---------------------------------------------------------------------


def run_simulate(cfg) -> dict:
    """One signal/observation pair under the physical measure, or one point set."""
    out = _out(cfg)
    model = cfg.build_model()
    if cfg.model.kind == "cluster":
        pts, labels = simulate_cluster_P(model, cfg.seed)
        rows = zip(pts.times, pts.marks, labels)
        return {"points.csv": write_csv(out / "points.csv", ["time", "mark", "theta_true"], rows)}
    if cfg.model.kind == "spatial":
        raise ConfigurationError("simulate supports gwn and cluster models; spatial paths come from filter-spatial", "model.kind")
    grid = cfg.make_grid()
    sig = simulate_signal(model, grid, RngStream(cfg.seed, "signal", 0, 0))
    obs = simulate_observation_P(model, sig, grid, RngStream(cfg.seed, "obs_noise", 0, 0))
    hx = [f"x_{i + 1}" for i in range(model.d_x)]
    hy = [f"y_{i + 1}" for i in range(model.d_y)]
    return {
        "signal.csv": write_csv(out / "signal.csv", ["time", *hx], path_rows(grid.times, sig.x)),
        "observation.csv": write_csv(out / "observation.csv", ["time", *hy], path_rows(grid.times, obs.y)),
    }


# --- particle filters -------------------------------------------------------------


def _filter_run(cfg, model, spatial: bool) -> dict:
    out = _out(cfg)
    grid = cfg.make_grid()
    phis = battery(cfg.phis)
    obs = observation_for(model, grid, cfg.seed, 0)
    n_set = () if spatial else cfg.grid.n_set
    ens = build_ensemble(
        model, grid, cfg.N, n_set, cfg.seed, obs, checkpoints=cfg.checkpoints, track=phis, scheme="euler",
        threads=cfg.threads, budget=_budget(cfg), block_size=cfg.block_size,
    )
    # the residual ensemble uses the Euler weight; estimates use the exponential one
    est = build_ensemble(
        model, grid, cfg.N, n_set, cfg.seed, obs, checkpoints=cfg.checkpoints, threads=cfg.threads,
        budget=_budget(cfg), block_size=cfg.block_size,
    )
    rows = []
    for t in cfg.checkpoints:
        for phi in phis:
            for n in (None, *n_set):
                e = rho(est, phi, t, n)
                rows.append((t, phi.name, "exact" if n is None else n, e.rho, e.pi, e.rho_se))
    files = {"estimates.csv": write_csv(out / "estimates.csv", ESTIMATE_HEADER, rows)}
    res = []
    for phi in phis:
        for fn in (zakai_residual, ks_residual):
            r = fn(ens, phi, cfg.checkpoints)
            for t, v, s in zip(r.times, r.residual, r.se):
                res.append((t, phi.name, r.kind, v, s, v - 4 * s, v + 4 * s))
    files["residuals.csv"] = write_csv(out / "residuals.csv", RESIDUAL_HEADER, res)
    if getattr(model, "linear", None) is not None:
        ks = kalman_for_model(model, obs.y, grid.dt)
        rows = [(t, *ks.mean[k], *np.diag(ks.cov[k])) for k, t in enumerate(grid.times)]
        hm = [f"mean_{i + 1}" for i in range(model.d_x)]
        hv = [f"var_{i + 1}" for i in range(model.d_x)]
        files["kalman.csv"] = write_csv(out / "kalman.csv", ["time", *hm, *hv], rows)
    return files


def run_filter_gwn(cfg) -> dict:
    if cfg.model.kind != "gwn":
        raise ConfigurationError("filter-gwn needs model.kind = gwn", "model.kind")
    return _filter_run(cfg, cfg.build_model(), spatial=False)


def run_filter_spatial(cfg) -> dict:
    if cfg.model.kind != "spatial":
        raise ConfigurationError("filter-spatial needs model.kind = spatial", "model.kind")
    return _filter_run(cfg, cfg.build_model(), spatial=True)


def run_filter_cluster(cfg) -> dict:
    """Simulate points, then the Monte Carlo, exact and recursion posteriors."""
    if cfg.model.kind != "cluster":
        raise ConfigurationError("filter-cluster needs model.kind = cluster", "model.kind")
    out = _out(cfg)
    model = cfg.build_model()
    pts, labels = simulate_cluster_P(model, cfg.seed)
    files = {"points.csv": write_csv(out / "points.csv", ["time", "mark", "theta_true"], zip(pts.times, pts.marks, labels))}
    rows = []
    mc = cluster_filter_mc(model, pts, cfg.N, cfg.seed)
    rows.extend((*row, "monte_carlo") for row in mc.rows())
    if len(pts) > cfg.budget.enumeration_bits:
        raise BudgetExceeded(f"{len(pts)} points exceed the enumeration budget of {cfg.budget.enumeration_bits}")
    rows.extend((*row, "enumeration") for row in cluster_filter_exact(model, pts, budget=cfg.budget.enumeration_bits).rows())
    rows.extend((*row, "recursion") for row in cluster_ks_recursion(model, pts).rows())
    header = ["t", "functional", "value", "se", "exact_flag", "method"]
    files["posterior.csv"] = write_csv(out / "posterior.csv", header, rows)
    return files


# --- frozen-sensor sweeps ---------------------------------------------------------


@dataclass
class SweepData:
    """Replicated ``U^n`` measurements with common random numbers."""

    phis: list
    n_values: list
    times: np.ndarray
    u: np.ndarray  # (R, P, K, C)
    u_se: np.ndarray
    rho: np.ndarray  # (R, P, C)
    rho_n: np.ndarray  # (R, P, K, C)

    def abs_error(self) -> np.ndarray:
        return np.abs(self.rho_n - self.rho[:, :, None, :])

    def richardson_error(self) -> np.ndarray:
        """``|2 rho^{2n} - rho^n - rho|`` for consecutive doublings, ``(R, P, K-1, C)``."""
        n = np.asarray(self.n_values)
        if np.any(n[1:] != 2 * n[:-1]):
            raise ConfigurationError("richardson needs an n_set of successive doublings", "grid.n_set")
        ext = richardson(self.rho_n[:, :, :-1], self.rho_n[:, :, 1:])
        return np.abs(ext - self.rho[:, :, None, :])


def picard_sweep(model, grid, phis, n_values, N, seed, replicates, checkpoints, threads=1, block_size=16384, budget=None):
    R, P, K, C = replicates, len(phis), len(n_values), len(checkpoints)
    u = np.empty((R, P, K, C))
    u_se = np.empty_like(u)
    rho_ = np.empty((R, P, C))
    rho_n = np.empty_like(u)
    for r in range(R):
        obs = observation_for(model, grid, seed, r)
        ens = build_ensemble(
            model, grid, N, n_values, seed, obs, replicate=r, checkpoints=checkpoints, threads=threads,
            block_size=block_size, budget=budget,
        )
        es = u_n_series(ens, phis, n_values, checkpoints)
        u[r], u_se[r], rho_[r], rho_n[r] = es.u, es.se, es.rho, es.rho_n
    return SweepData([p.name for p in phis], list(n_values), np.asarray(checkpoints, float), u, u_se, rho_, rho_n)


def _sweep(cfg):
    model = cfg.build_model()
    if cfg.model.kind != "gwn":
        raise ConfigurationError("frozen-sensor weights exist for gwn models only", "model.kind")
    return picard_sweep(
        model, cfg.make_grid(), battery(cfg.phis), cfg.grid.n_set, cfg.N, cfg.seed, cfg.replicates,
        cfg.checkpoints, cfg.threads, cfg.block_size, _budget(cfg),
    )


def convergence_rows(sweep: SweepData):
    """Rows ``(phi_id, n, checkpoint, abs_error, se, slope_fit)``; error is RMS over replicates."""
    err = sweep.abs_error()
    rows = []
    for p, name in enumerate(sweep.phis):
        for c, t in enumerate(sweep.times):
            fit = convergence_fit(name, sweep.n_values, err[:, p, :, c])
            for i, n in enumerate(sweep.n_values):
                rows.append((name, n, t, fit.error[i], fit.error_se[i], fit.slope))
    return rows


CONVERGENCE_HEADER = ["phi_id", "n", "checkpoint", "abs_error", "se", "slope_fit"]


def run_convergence(cfg, sweep: SweepData | None = None) -> dict:
    out = _out(cfg)
    sweep = sweep or _sweep(cfg)
    files = {"convergence.csv": write_csv(out / "convergence.csv", CONVERGENCE_HEADER, convergence_rows(sweep))}
    rows = []
    for p, name in enumerate(sweep.phis):
        for i, n in enumerate(sweep.n_values):
            est, se = sup_square_moment(sweep.u[:, p, i, :])
            rows.append((name, n, est, se))
    files["u_bound.csv"] = write_csv(out / "u_bound.csv", ["phi_id", "n", "sup_u2", "se"], rows)
    return files


def run_richardson(cfg, sweep: SweepData | None = None) -> dict:
    out = _out(cfg)
    sweep = sweep or _sweep(cfg)
    err = sweep.richardson_error()
    ns = sweep.n_values[:-1]
    rows = []
    for p, name in enumerate(sweep.phis):
        for c, t in enumerate(sweep.times):
            fit = convergence_fit(name, ns, err[:, p, :, c])
            for i, n in enumerate(ns):
                rows.append((name, n, t, fit.error[i], fit.error_se[i], fit.slope))
    return {"richardson.csv": write_csv(out / "richardson.csv", CONVERGENCE_HEADER, rows)}


# --- limit equation -----------------------------------------------------------------


@dataclass
class LimitComparison:
    """Per-replicate ``U^n_T`` from particles and the limit solution on the same ``Y``."""

    phis: list
    n: int
    u: np.ndarray  # (R, P)
    u_se: np.ndarray
    limit: np.ndarray  # independent extra noise
    prelimit: np.ndarray  # R^n from the same Y
    leaked: float
    dropped: float


def limit_noise(grid, seed, replicate):
    """Fine increments of the extra Brownian noise, independent of every other stream."""
    keys = stream_keys(seed, "limit_noise", [0], replicate)
    return normal_table(keys, 0, grid.fine_steps)[:, 0] * np.sqrt(grid.dt)


def limit_comparison(model, grid, phis, n, N, seed, replicates, basis, threads=1, block_size=16384, budget=None):
    T = grid.horizon
    R, P = replicates, len(phis)
    u, u_se = np.empty((R, P)), np.empty((R, P))
    lim, pre = np.empty((R, P)), np.empty((R, P))
    leaked = dropped = 0.0
    poly = isinstance(basis, PolynomialBasis)
    if poly:
        coeffs = {}
        for phi in phis:
            if phi.name not in ("one", "x", "x2"):
                raise ConfigurationError(f"{phi.name} is not a polynomial of low degree", "phis")
            coeffs[phi.name] = {"one": [1.0], "x": [0.0, 1.0], "x2": [0.0, 0.0, 1.0]}[phi.name]
    for r in range(R):
        y = observation_for(model, grid, seed, r).y
        obs_ = polynomial_sources(model, basis) if poly else NodalSources(model, basis)
        data = run_particles(
            model, grid, N, seed=seed, replicate=r, obs=y, n_set=(n,), observers=[obs_], threads=threads,
            block_size=block_size, budget=budget,
        )
        es = u_n_series(ParticleEnsemble(model, data, {}), phis, [n], [T])
        u[r], u_se[r] = es.u[:, 0, 0], es.se[:, 0, 0]
        src = data.observed[0]
        for dr, dest, mode in ((limit_noise(grid, seed, r), lim, "independent"), (r_increments(y, grid, n)[:, 0], pre, "prelimit")):
            if poly:
                sol = galerkin_polynomial(model, basis, src, y, grid, dr, coeffs, [T], N, mode)
            else:
                sol = galerkin_nodal(model, basis, src, y, grid, dr, phis, [T], mode)
            dest[r] = sol.values[:, 0]
            leaked, dropped = max(leaked, sol.leaked), max(dropped, sol.dropped)
    return LimitComparison([p.name for p in phis], n, u, u_se, lim, pre, leaked, dropped)


def make_basis(cfg):
    g = cfg.galerkin
    if g.basis == "polynomial":
        return PolynomialBasis(g.degree)
    return NodalBasis(g.lower, g.upper, g.nodes)


def run_error_expansion(cfg) -> dict:
    """``U^n`` paths, the limit solution per replicate and the sawtooth-martingale moments."""
    out = _out(cfg)
    model = cfg.build_model()
    grid = cfg.make_grid()
    phis = [p for p in battery(cfg.phis) if p.name != "one"] or battery(["x"])
    sweep = _sweep(cfg)
    rows = []
    for r in range(sweep.u.shape[0]):
        for p, name in enumerate(sweep.phis):
            for i, n in enumerate(sweep.n_values):
                for c, t in enumerate(sweep.times):
                    rows.append((r, t, name, n, sweep.u[r, p, i, c], sweep.u_se[r, p, i, c]))
    files = {"u_series.csv": write_csv(out / "u_series.csv", ["replicate", "t", "phi_id", "n", "u", "se"], rows)}
    n_top = max(cfg.grid.n_set)
    cmp_ = limit_comparison(
        model, grid, phis, n_top, cfg.N, cfg.seed, cfg.replicates, make_basis(cfg), cfg.threads, cfg.block_size, _budget(cfg)
    )
    rows = []
    for r in range(cmp_.u.shape[0]):
        for p, name in enumerate(cmp_.phis):
            rows.append((r, grid.horizon, name, cmp_.limit[r, p], cmp_.prelimit[r, p], cmp_.u[r, p], cmp_.u_se[r, p]))
    header = ["replicate", "t", "phi_id", "U_value", "U_prelimit", "U_n", "U_n_se"]
    files["galerkin.csv"] = write_csv(out / "galerkin.csv", header, rows)
    stats = r_limit_test(grid, cfg.grid.n_set, max(cfg.replicates, 2), cfg.seed, d_y=2)
    rows = [(s.n, s.var, s.var_se, s.corr_y, s.corr_y_se, s.corr_rr, s.corr_rr_se) for s in stats]
    files["r_limit.csv"] = write_csv(out / "r_limit.csv", ["n", "var", "var_se", "corr_y", "corr_y_se", "corr_rr", "corr_rr_se"], rows)
    return files


RUNNERS = {
    "simulate": run_simulate,
    "filter-gwn": run_filter_gwn,
    "filter-spatial": run_filter_spatial,
    "filter-cluster": run_filter_cluster,
    "convergence": run_convergence,
    "error-expansion": run_error_expansion,
    "richardson": run_richardson,
}

__all__ = ["RUNNERS", "SweepData", "picard_sweep", "limit_comparison", "LimitComparison", "convergence_rows"]
