"""Acceptance battery: ten pass/fail criteria at fixed sizes and tolerances.

Each criterion function returns a ``CriterionResult`` whose ``metrics`` are
long-format rows ``(metric, value, threshold, passed)``.  Seeds are fixed in
advance; nothing is retried.
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import (
    cluster_filter_exact,
    cluster_filter_mc,
    cluster_ks_recursion,
    reference_replicates,
    simulate_cluster_P,
    terminal_logweights,
)
from .config import ExperimentConfig, file_digest
from .engine import run_particles
from .error_expansion import (
    convergence_fit,
    cross_variation_closed,
    cross_variation_sum,
    quadratic_variation_closed,
    quadratic_variation_sum,
    r_limit_test,
    rms_with_se,
    sup_square_moment,
)
from .experiments import RUNNERS, limit_comparison, picard_sweep
from .filter_gwn import build_ensemble, ks_residual, rho, zakai_residual
from .galerkin import NodalBasis
from .grid import make_grid
from .io import write_csv
from .models import battery, bounded_nonlinear, cell_model, linear_gaussian, monomial, small_cluster_model
from .oracle import kalman_for_model
from .sde import observation_for, simulate_pairs_P
from .stats import mean_se, variance_se

SEED = 20240601


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    metrics: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:2d} [{'PASS' if self.passed else 'FAIL'}] {self.title}: {self.summary} ({self.seconds:.0f}s)"


def _metric(rows, name, value, threshold, ok):
    rows.append((name, float(value), str(threshold), bool(ok)))
    return bool(ok)


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# 1 ----------------------------------------------------------------------------------


@_timed
def martingale_normalization(replicates=100_000, M=256, seed=SEED) -> CriterionResult:
    """Mean of ``L(T)`` over independent reference-measure replicates is 1 within 4 SE, per model."""
    rows = []
    grid = make_grid(1.0, M)
    ok = True
    for model in (bounded_nonlinear(), cell_model(cells=2)):
        data = run_particles(model, grid, replicates, seed=seed, obs=None)
        m, se = mean_se(np.exp(data.logw[-1]))
        ok &= _metric(rows, f"{model.name}: mean L(T) - 1 in SE", (m - 1) / se, "|z| <= 4", abs(m - 1) <= 4 * se)
    cmodel = small_cluster_model(3, "self_exciting")
    L = np.exp(terminal_logweights(cmodel, reference_replicates(cmodel, seed, replicates)))
    m, se = mean_se(L)
    ok &= _metric(rows, "cluster: mean L(T) - 1 in SE", (m - 1) / se, "|z| <= 4", abs(m - 1) <= 4 * se)
    worst = max(abs(r[1]) for r in rows)
    return CriterionResult(1, "martingale normalization", ok, f"max |z| = {worst:.2f} over 3 models", rows)


# 2 ----------------------------------------------------------------------------------


@_timed
def kalman_agreement(replicates=50, N=100_000, M=1024, seed=SEED, threads=1) -> CriterionResult:
    """Particle mean and second moment against the Kalman-Bucy oracle on the truncated linear model."""
    model = linear_gaussian(F=-0.5, G=1.0, H=1.0, x0_mean=0.0, x0_std=1.0, clip=10.0)
    grid = make_grid(1.0, M)
    _, ys = simulate_pairs_P(model, grid, seed, replicates)
    x1, x2 = battery(["x", "x2"])
    hits = 0
    zs = []
    for r in range(replicates):
        y = ys[:, r]
        ens = build_ensemble(model, grid, N, (), seed, y, replicate=r + 1, threads=threads)
        kf = kalman_for_model(model, y, grid.dt)
        m, P = kf.mean[-1, 0], kf.cov[-1, 0, 0]
        e1, e2 = rho(ens, x1, 1.0), rho(ens, x2, 1.0)
        z1 = (e1.pi - m) / e1.pi_se
        z2 = (e2.pi - (P + m * m)) / e2.pi_se
        zs.append((z1, z2))
        hits += abs(z1) <= 3 and abs(z2) <= 3
    frac = hits / replicates
    rows = []
    ok = _metric(rows, "fraction of paths with both |z| <= 3", frac, ">= 0.9", frac >= 0.9)
    zs = np.asarray(zs)
    _metric(rows, "max |z| mean", np.max(np.abs(zs[:, 0])), "info", True)
    _metric(rows, "max |z| second moment", np.max(np.abs(zs[:, 1])), "info", True)
    return CriterionResult(2, "Kalman-Bucy agreement", ok, f"{hits}/{replicates} paths within 3 SE", rows)


# 3 ----------------------------------------------------------------------------------


@_timed
def residuals(N=100_000, M=1024, seed=SEED, threads=1, models=None) -> CriterionResult:
    """Unnormalized and normalized residuals within 4 bootstrap SE at every checkpoint."""
    grid = make_grid(1.0, M)
    phis = battery(["one", "x", "x2", "tanh"])
    checkpoints = [0.25, 0.5, 0.75, 1.0]
    rows = []
    ok = True
    worst = 0.0
    for model in models or (bounded_nonlinear(), cell_model(cells=2)):
        y = observation_for(model, grid, seed, 0)
        ens = build_ensemble(model, grid, N, (), seed, y, checkpoints=checkpoints, track=phis, scheme="euler", threads=threads)
        for phi in phis:
            for fn in (zakai_residual, ks_residual):
                r = fn(ens, phi, checkpoints)
                z = r.max_z()
                worst = max(worst, z)
                ok &= _metric(rows, f"{model.name} {r.kind} {phi.name}: max |r|/se", z, "<= 4", r.within(4.0))
    return CriterionResult(3, "Zakai and Kushner-Stratonovich residuals", ok, f"max |r|/se = {worst:.2f}", rows)


# 4 ----------------------------------------------------------------------------------


def cluster_instances(count=20, seed=SEED, max_points=10):
    """First ``count`` physical-measure point sets with 1 to ``max_points`` points, cycling intensity kinds."""
    kinds = ("self_exciting", "count", "constant")
    out = []
    r = 0
    while len(out) < count:
        kind = kinds[len(out) % len(kinds)]
        model = small_cluster_model(3, kind, horizon=2.0)
        pts, _ = simulate_cluster_P(model, seed, r)
        r += 1
        if 1 <= len(pts) <= max_points:
            out.append((model, pts))
    return out


@_timed
def cluster_equivalence(instances=20, N=100_000, seed=SEED) -> CriterionResult:
    """Monte Carlo within 4 SE of enumeration at the horizon; recursion within 1e-8 everywhere."""
    rows = []
    worst_z = worst_d = 0.0
    ok_mc = ok_ks = True
    for i, (model, pts) in enumerate(cluster_instances(instances, seed)):
        ex = cluster_filter_exact(model, pts)
        mc = cluster_filter_mc(model, pts, N, seed, replicate=i)
        ks = cluster_ks_recursion(model, pts)
        d = np.abs(mc.values[-1] - ex.values[-1])
        okv = d <= 4 * mc.se[-1] + 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(d <= 1e-12, 0.0, d / mc.se[-1])
        worst_z = max(worst_z, float(np.max(z)))
        dk = float(np.max(np.abs(ks.values - ex.values)))
        worst_d = max(worst_d, dk)
        ok_mc &= bool(np.all(okv))
        ok_ks &= dk <= 1e-8
        rows.append((f"instance {i} ({len(pts)} points): max MC |z|", float(np.max(z)), "<= 4", bool(np.all(okv))))
        rows.append((f"instance {i}: max recursion difference", dk, "<= 1e-8", dk <= 1e-8))
    return CriterionResult(
        4, "cluster enumeration equivalence", ok_mc and ok_ks, f"max MC |z| = {worst_z:.2f}, max recursion diff = {worst_d:.1e}", rows
    )


# 5 ----------------------------------------------------------------------------------


@_timed
def sawtooth_identities(replicates=10_000, M=16384, seed=SEED) -> CriterionResult:
    """Coarse-point quadratic variation, and the variance and correlations of ``R^n(T)``."""
    grid = make_grid(1.0, M)
    rows = []
    ok = True
    worst_closed = worst_rel = worst_cross = 0.0
    for n in (4, 8, 16, 32, 64):
        S = grid.coarse_stride_for(n)
        for k in range(1, n + 1):
            qv = quadratic_variation_sum(grid, n, k)
            worst_closed = max(worst_closed, abs(qv - quadratic_variation_closed(grid, n, k)))
            worst_rel = max(worst_rel, abs(qv - k / n) / (k / n) * S * S / 2.0)
            cv = cross_variation_sum(grid, n, k)
            worst_cross = max(worst_cross, abs(cv - cross_variation_closed(grid, n, k)))
            ok &= abs(cv) <= 2.0 * k * n / M  # O(1/M)
    ok &= _metric(rows, "max |QV sum - closed form|", worst_closed, "<= 1e-12", worst_closed <= 1e-12)
    ok &= _metric(rows, "max |QV sum - k/n| / ((k/n) 2/S^2)", worst_rel, "<= 1 + 1e-9", worst_rel <= 1 + 1e-9)
    ok &= _metric(rows, "max |cross sum - closed form|", worst_cross, "<= 1e-12", worst_cross <= 1e-12)
    st = r_limit_test(grid, [64], replicates, seed, d_y=2)[0]
    ok &= _metric(rows, "Var R^64(T)", st.var, "in [0.95, 1.05]", st.passed["variance"])
    ok &= _metric(rows, "corr(Y(T), R^64(T)) / se", st.corr_y / st.corr_y_se, "|z| <= 4", st.passed["corr_y"])
    ok &= _metric(rows, "corr(R^64_1(T), R^64_2(T)) / se", st.corr_rr / st.corr_rr_se, "|z| <= 4", st.passed["corr_rr"])
    return CriterionResult(5, "sawtooth martingale identities", ok, f"Var R(T) = {st.var:.4f}, corr z = {st.corr_y / st.corr_y_se:.2f}", rows)


# 6, 7, 9 ---------------------------------------------------------------------------


SWEEP_N = (4, 8, 16, 32, 64)
SWEEP_PHIS = ("x", "x2", "tanh")


def convergence_sweep(replicates=40, N=100_000, M=4096, seed=SEED, threads=1):
    grid = make_grid(1.0, M)
    return picard_sweep(
        bounded_nonlinear(), grid, battery(SWEEP_PHIS), SWEEP_N, N, seed, replicates, [0.25, 0.5, 0.75, 1.0], threads
    )


def fine_step_sensitivity(replicates=12, N=10_000, M=4096, n=64, seed=SEED, threads=1):
    """RMS error at the largest ``n`` on the sweep grid and on a grid with twice the fine steps.

    Returns ``{phi: (rms_M, se_M, rms_2M, se_2M)}``.  The replicates are
    independent between the two grids, so agreement is judged on combined SE.
    """
    out = {}
    sweeps = [picard_sweep(bounded_nonlinear(), make_grid(1.0, m), battery(SWEEP_PHIS), [n], N, seed, replicates, [1.0], threads)
              for m in (M, 2 * M)]
    for p, name in enumerate(SWEEP_PHIS):
        a, sa = rms_with_se(sweeps[0].abs_error()[:, p, 0, 0])
        b, sb = rms_with_se(sweeps[1].abs_error()[:, p, 0, 0])
        out[name] = (float(a), float(sa), float(b), float(sb))
    return out


@_timed
def first_order(sweep, sensitivity=None) -> CriterionResult:
    """Slope of the RMS error of ``rho^n_T`` against ``n`` lies in [-1.2, -0.8].

    With ``sensitivity`` (from ``fine_step_sensitivity``) the error at the
    largest ``n`` must also be stable when the fine step is halved.
    """
    rows = []
    ok = True
    err = sweep.abs_error()
    slopes = []
    for p, name in enumerate(sweep.phis):
        fit = convergence_fit(name, sweep.n_values, err[:, p, :, -1])
        slopes.append(fit.slope)
        ok &= _metric(rows, f"{name}: slope", fit.slope, "in [-1.2, -0.8]", -1.2 <= fit.slope <= -0.8)
    for name, (a, sa, b, sb) in (sensitivity or {}).items():
        z = abs(a - b) / np.hypot(sa, sb)
        _metric(rows, f"{name}: RMS error at M and 2M", b / a, "ratio (info)", True)
        ok &= _metric(rows, f"{name}: halved fine step shift / combined SE", z, "<= 3", z <= 3)
    return CriterionResult(6, "first-order convergence", ok, "slopes " + ", ".join(f"{s:.3f}" for s in slopes), rows)


@_timed
def u_bounded(sweep) -> CriterionResult:
    """``E[sup_t U^n_t(phi)^2]`` stays within a factor 2 of its value at the smallest ``n``."""
    rows = []
    ok = True
    worst = 1.0
    for p, name in enumerate(sweep.phis):
        m = np.array([sup_square_moment(sweep.u[:, p, i, :])[0] for i in range(len(sweep.n_values))])
        ratio = m / m[0]
        spread = float(max(ratio.max(), 1 / ratio.min()))
        worst = max(worst, spread)
        ok &= _metric(rows, f"{name}: max factor from n={sweep.n_values[0]}", spread, "< 2", spread < 2.0)
    return CriterionResult(7, "boundedness of the scaled error", ok, f"largest factor {worst:.2f}", rows)


@_timed
def richardson_order(sweep) -> CriterionResult:
    """Slope of the extrapolated error ``|2 rho^{2n} - rho^n - rho|`` is steeper than -1.5."""
    rows = []
    ok = True
    err = sweep.richardson_error()
    slopes = []
    for p, name in enumerate(sweep.phis):
        fit = convergence_fit(name, sweep.n_values[:-1], err[:, p, :, -1])
        slopes.append(fit.slope)
        ok &= _metric(rows, f"{name}: extrapolated slope", fit.slope, "< -1.5", fit.slope < -1.5)
    return CriterionResult(9, "Richardson order", ok, "slopes " + ", ".join(f"{s:.3f}" for s in slopes), rows)


# 8 ----------------------------------------------------------------------------------


@_timed
def limit_moments(replicates=200, N=10_000, M=4096, n=64, seed=SEED, threads=1) -> CriterionResult:
    """Mean and variance of ``U^n_T(x)`` against the limit equation solved on the same paths."""
    grid = make_grid(1.0, M)
    cmp_ = limit_comparison(bounded_nonlinear(), grid, [monomial(1)], n, N, seed, replicates, NodalBasis())
    u, se, g = cmp_.u[:, 0], cmp_.u_se[:, 0], cmp_.limit[:, 0]
    mu, mu_se = mean_se(u)
    mg, mg_se = mean_se(g)
    vu, vu_se = variance_se(u)
    vu_debiased = vu - np.mean(se**2)  # remove the particle noise of each U^n estimate
    vg, vg_se = variance_se(g)
    rows = []
    with np.errstate(divide="ignore", invalid="ignore"):
        zm = (mu - mg) / np.hypot(mu_se, mg_se)
        zv = (vu_debiased - vg) / np.hypot(vu_se, vg_se)
    ok = _metric(rows, "mean difference / combined SE", zm, "|z| <= 3", abs(zm) <= 3)
    ok &= _metric(rows, "variance difference / combined SE", zv, "|z| <= 3", abs(zv) <= 3)
    _metric(rows, "mean U^n", mu, "info", True)
    _metric(rows, "mean limit", mg, "info", True)
    _metric(rows, "var U^n (particle noise removed)", vu_debiased, "info", True)
    _metric(rows, "var limit", vg, "info", True)
    _metric(rows, "corr(U^n, pre-limit solution)", np.corrcoef(u, cmp_.prelimit[:, 0])[0, 1], "info", True)
    _metric(rows, "leaked source fraction", cmp_.leaked, "info", True)
    return CriterionResult(8, "limit-law moment match", ok, f"mean z = {zm:.2f}, variance z = {zv:.2f}", rows)


# 10 ---------------------------------------------------------------------------------


def _determinism_configs():
    base = {"N": 6000, "block_size": 2048, "grid": {"T": 1.0, "M": 256, "n_set": [4, 8, 16]}, "seed": 7, "checkpoints": [0.5, 1.0]}
    return [
        ("filter-gwn", {**base, "model": {"kind": "gwn", "name": "bounded"}}),
        ("filter-spatial", {**base, "model": {"kind": "spatial", "name": "cells", "params": {"cells": 2}}}),
        ("filter-cluster", {**base, "N": 5000, "model": {"kind": "cluster", "name": "small", "params": {"m": 3}}}),
        ("convergence", {**base, "replicates": 2, "phis": ["x", "tanh"], "model": {"kind": "gwn", "name": "bounded"}}),
    ]


@_timed
def determinism(threads=(1, 2, 3)) -> CriterionResult:
    """Identical (config, seed) gives byte-identical CSV files at every thread count."""
    rows = []
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        for cmd, raw in _determinism_configs():
            digests = []
            for k, th in enumerate((threads[0], *threads)):
                out = Path(tmp) / f"{cmd}-{k}"
                cfg = ExperimentConfig.from_dict({**raw, "threads": th, "out": str(out)})
                files = RUNNERS[cmd](cfg)
                digests.append({name: file_digest(p) for name, p in sorted(files.items())})
            same = all(d == digests[0] for d in digests)
            ok &= _metric(rows, f"{cmd}: identical outputs over runs and threads {threads}", float(same), "1", same)
    return CriterionResult(10, "determinism", ok, "byte-identical" if ok else "outputs differ", rows)


# --- suites ---------------------------------------------------------------------------


def run_full(threads=1, log=print, only=None) -> list[CriterionResult]:
    """All ten criteria at their specified sizes, in numeric order."""
    wanted = set(only or range(1, 11))
    results = {}
    if 1 in wanted:
        results[1] = martingale_normalization()
    if 2 in wanted:
        results[2] = kalman_agreement(threads=threads)
    if 3 in wanted:
        results[3] = residuals(threads=threads)
    if 4 in wanted:
        results[4] = cluster_equivalence()
    if 5 in wanted:
        results[5] = sawtooth_identities()
    if wanted & {6, 7, 9}:
        t0 = time.perf_counter()
        sweep = convergence_sweep(threads=threads)
        shared = time.perf_counter() - t0
        for k, fn in ((6, first_order), (7, u_bounded), (9, richardson_order)):
            if k in wanted:
                extra = 0.0
                if k == 6:
                    t1 = time.perf_counter()
                    sens = fine_step_sensitivity(threads=threads)
                    extra = time.perf_counter() - t1
                    results[k] = fn(sweep, sens)
                else:
                    results[k] = fn(sweep)
                results[k].seconds += shared + extra
    if 8 in wanted:
        results[8] = limit_moments(threads=threads)
    if 10 in wanted:
        results[10] = determinism()
    ordered = [results[k] for k in sorted(results)]
    for r in ordered:
        log(r.line())
    return ordered


def write_results(results, path) -> Path:
    rows = [(r.number, r.title, m[0], m[1], m[2], int(m[3])) for r in results for m in r.metrics]
    return write_csv(path, ["criterion", "title", "metric", "value", "threshold", "passed"], rows)
