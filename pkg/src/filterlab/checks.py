"""Fast structural checks: degenerate cases whose answers are known exactly.

Every check returns ``(passed, detail)``.  The whole suite runs in well under
a minute and is what ``filterlab acceptance --suite trivial`` executes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cluster import (
    ClusterModel,
    cluster_filter_exact,
    cluster_filter_mc,
    cluster_ks_recursion,
    cluster_zakai_residual,
    membership_prior,
    simulate_cluster_P,
    simulate_observations_Q,
)
from .engine import run_particles
from .error_expansion import r_path, richardson, u_n_series
from .errors import ConfigurationError
from .filter_gwn import build_ensemble, ks_residual, rho, zakai_residual
from .filter_spatial import build_spatial_ensemble
from .galerkin import NodalBasis, NodalSources, galerkin_nodal
from .grid import RngStream, make_grid
from .models import (
    ConstantIntensity,
    SpatialModel,
    apply_generator,
    apply_o_tilde,
    cell_model,
    constant,
    constant_model,
    linear_gaussian,
    monomial,
    scalar_model,
    small_cluster_model,
    tanh_function,
)
from .oracle import bernoulli_table, kalman_bucy, small_case_expectation
from .sde import ObservationPath, simulate_observation_P, simulate_signal, simulate_signal_spatial
from .weights import weight_cluster, weight_exact, weight_picard

SEED = 11


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _zero_obs(grid, d=1, slope=0.0):
    return ObservationPath(grid.times, np.outer(grid.times, np.full(d, slope)))


def grid_floor():
    g = make_grid(1.0, 8, 4)
    return g.tau(0.3) == 0.25 and g.tau_index(g.step_of(0.25)) == g.step_of(0.25), "tau(0.3) = 0.25, tau(0.25) = 0.25"


def grid_divisibility():
    try:
        make_grid(1.0, 6, 4)
    except ConfigurationError as exc:
        return "M" in exc.field, f"rejected: {exc}"
    return False, "M=6, n=4 accepted"


def rng_repeatable():
    s = RngStream(SEED, "signal", 3, 1)
    a, b = s.normals(1000), RngStream(SEED, "signal", 3, 1).normals(1000)
    return bool(np.array_equal(a, b)), "two draws of one stream are bit-identical"


def generator_constants():
    m = linear_gaussian()
    x = np.linspace(-2, 2, 9)[:, None]
    a1 = apply_generator(m, constant(1.0), x)
    bm = constant_model(0.0, 1.0)
    a2 = apply_generator(bm, monomial(2), x)
    ok = np.all(a1 == 0) and np.allclose(a2, 1.0, atol=1e-14)
    return bool(ok), "A1 = 0 and A x^2 = 1 for unit Brownian motion"


def o_tilde_cases():
    x = np.linspace(-1, 1, 5)[:, None]
    lin = linear_gaussian(F=0.0, G=1.0, H=1.0)
    v1 = apply_o_tilde(lin, monomial(1), 0, x)
    v0 = apply_o_tilde(constant_model(0.0, 1.0, 2.0), tanh_function(), 0, x)
    return bool(np.allclose(v1, 1.0) and np.all(v0 == 0)), "trace term is 1 for the identity case, 0 for a constant sensor"


def frozen_signal():
    g = make_grid(1.0, 16)
    still = simulate_signal(constant_model(0.0, 0.0, x0_mean=0.7), g, RngStream(SEED, "signal"))
    moving = simulate_signal(constant_model(1.0, 0.0), g, RngStream(SEED, "signal"))
    return bool(np.all(still.x == 0.7) and moving.x[-1, 0] == 1.0), "no dynamics stays put; unit drift reaches 1"


def observation_drift():
    g = make_grid(1.0, 16)
    sig = simulate_signal(constant_model(0.0, 1.0, sensor=0.4), g, RngStream(SEED, "signal"))
    obs = simulate_observation_P(constant_model(0.0, 1.0, sensor=0.4), sig, g, None)
    return bool(abs(obs.y[-1, 0] - 0.4) < 1e-14 and obs.y[0, 0] == 0), "frozen noise and constant sensor give y_M = cT"


def spatial_transport():
    g = make_grid(1.0, 32)
    zero = lambda x: np.zeros(x.shape[:-1] + (1, 1))  # noqa: E731
    m = SpatialModel(
        name="transport", d_x=1, d_b=1, masses=np.ones(1), drift=lambda x: np.zeros_like(x), diffusion=zero,
        kernel=lambda x: np.ones(x.shape[:-1] + (1, 1)), sensor=lambda x: np.zeros(x.shape[:-1] + (1,)),
        sensor_grad=zero, sensor_hess=lambda x: np.zeros(x.shape[:-1] + (1, 1, 1)),
        x0_mean=np.array([0.2]), x0_std=np.zeros(1),
    )
    path = simulate_signal_spatial(m, g, RngStream(SEED, "signal"), _zero_obs(g, 1, 1.5))
    return bool(abs(path.x[-1, 0] - 1.7) < 1e-13), f"x_M = {path.x[-1, 0]:.15f} (expected 1.7)"


def weights_trivial():
    g = make_grid(1.0, 64)
    m0 = constant_model(0.3, 1.0, sensor=0.0)
    mc = constant_model(0.3, 1.0, sensor=0.8)
    sig = simulate_signal(mc, g, RngStream(SEED, "signal"))
    obs = ObservationPath(g.times, np.r_[0.0, np.cumsum(RngStream(SEED, "obs").normals(64) * 0.125)][:, None])
    ok = np.all(weight_exact(m0, sig, obs, g).logw == 0)
    ex = weight_exact(mc, sig, obs, g).logw
    ok &= all(np.allclose(weight_picard(mc, sig, obs, g, n).logw, ex, atol=1e-14, rtol=0) for n in (4, 16, 64))
    bn = linear_gaussian()
    sb = simulate_signal(bn, g, RngStream(SEED, "signal"))
    ok &= np.array_equal(weight_picard(bn, sb, obs, g, 64).logw, weight_exact(bn, sb, obs, g).logw)
    return bool(ok), "h = 0 gives L = 1; constant h and n = M give L^n = L"


def cluster_weight_unit():
    m = small_cluster_model(3, "dominating")
    pts = simulate_observations_Q(m, SEED, 0)
    theta = (np.arange(len(pts)) % 2)[None, :]
    w = weight_cluster(m, theta, pts.times, pts.marks, [0.0, m.horizon])
    return bool(np.allclose(w.logw, 0.0)), f"lambda = lambda_0 gives L = 1 on {len(pts)} points"


def ensemble_degenerate():
    g = make_grid(1.0, 32)
    m = constant_model(0.0, 1.0, sensor=0.0, x0_std=1.0)
    obs = _zero_obs(g)
    ens = build_ensemble(m, g, 1000, (4,), SEED, obs, track=[constant(1.0)])
    e = rho(ens, constant(1.0), 1.0)
    one = build_ensemble(linear_gaussian(), g, 1, (), SEED, obs)
    e1 = rho(one, monomial(1), 1.0)
    x1 = one.state(1.0)[0, 0] * one.weights(1.0)[0]
    z = zakai_residual(ens, constant(1.0), [0.5, 1.0])
    return bool(e.rho == 1.0 and e1.rho == x1 and np.all(z.residual == 0)), "h = 0 gives unit mass; N = 1 is the particle itself"


def residual_one():
    g = make_grid(1.0, 64)
    m = linear_gaussian()
    obs = ObservationPath(g.times, np.r_[0.0, np.cumsum(RngStream(SEED, "obs").normals(64) * 0.125)][:, None])
    ens = build_ensemble(m, g, 2000, (), SEED, obs, checkpoints=[0.5, 1.0], track=[constant(1.0)])
    r = ks_residual(ens, constant(1.0), [0.5, 1.0])
    return bool(np.max(np.abs(r.residual)) < 1e-12), f"normalized residual of 1 is {np.max(np.abs(r.residual)):.1e}"


def rho_collapse():
    g = make_grid(1.0, 64)
    m = linear_gaussian()
    obs = ObservationPath(g.times, np.r_[0.0, np.cumsum(RngStream(SEED, "obs").normals(64) * 0.125)][:, None])
    ens = build_ensemble(m, g, 500, (64,), SEED, obs)
    a, b = rho(ens, monomial(1), 1.0), rho(ens, monomial(1), 1.0, 64)
    return a.rho == b.rho, "rho with n = M equals exact rho bit-for-bit"


def spatial_matches_scalar():
    g = make_grid(1.0, 64)
    sp = cell_model(cells=1, alpha=0.0, sigma=0.8, kappa=1.0, x0_std=0.5)
    sc = scalar_model(
        "scalar-cell", drift=lambda x: -np.tanh(x), diffusion=lambda x: np.full_like(x, 0.8),
        sensor=np.tanh, sensor_d1=lambda x: 1 / np.cosh(x) ** 2,
        sensor_d2=lambda x: -2 * np.tanh(x) / np.cosh(x) ** 2, x0_std=0.5,
    )
    obs = ObservationPath(g.times, np.r_[0.0, np.cumsum(RngStream(SEED, "obs").normals(64) * 0.125)][:, None])
    a = rho(build_spatial_ensemble(sp, g, 2000, SEED, obs), tanh_function(), 1.0)
    b = rho(build_ensemble(sc, g, 2000, (), SEED, obs), tanh_function(), 1.0)
    return abs(a.rho - b.rho) < 1e-12, f"|difference| = {abs(a.rho - b.rho):.1e}"


def cluster_empty():
    m = ClusterModel(nu=[0.5, 0.5], gamma=[0.0, 0.0], lam0=[1.0, 1.0], intensity=ConstantIntensity([1.0, 1.0], 0.0))
    pts, _ = simulate_cluster_P(m, SEED, 0)
    return len(pts) == 0, "no noise and no cluster gives no points"


def cluster_prior_posterior():
    m = small_cluster_model(3, "dominating", horizon=2.0)
    pts = next(p for r in range(50) if len(p := simulate_observations_Q(m, SEED, r)) >= 4)
    names = [f"theta[{i}]" for i in range(len(pts))]
    q = membership_prior(m, pts)
    ex = cluster_filter_exact(m, pts, names=names)
    mc = cluster_filter_mc(m, pts, 20000, SEED, names=names)
    ks = cluster_ks_recursion(m, pts, names=["one"])
    zk = cluster_zakai_residual(m, pts, names=["one"])
    ok = np.allclose(ex.values[-1], q, atol=1e-12)
    ok &= bool(np.all(np.abs(mc.values[-1] - q) <= 4 * mc.se[-1] + 1e-12))
    ok &= bool(np.allclose(ks.values, 1.0, atol=1e-12)) and zk.max_abs() < 1e-10
    return bool(ok), f"posterior equals prior on {len(pts)} points; pi(1) = 1"


def r_zero():
    g = make_grid(1.0, 64)
    return bool(np.all(r_path(_zero_obs(g), g, 8).r == 0)), "zero observation gives zero R^n"


def u_constant_sensor():
    g = make_grid(1.0, 64)
    m = constant_model(0.0, 1.0, sensor=0.5, x0_std=1.0)
    obs = ObservationPath(g.times, np.r_[0.0, np.cumsum(RngStream(SEED, "obs").normals(64) * 0.125)][:, None])
    ens = build_ensemble(m, g, 500, (4, 8), SEED, obs, checkpoints=[0.5, 1.0])
    es = u_n_series(ens, [monomial(1)], [4, 8], [0.5, 1.0])
    ext = richardson(es.rho_n[:, 0], es.rho_n[:, 1])
    ok = np.max(np.abs(es.u)) < 1e-12 and np.allclose(ext, es.rho, atol=1e-13)
    return bool(ok), f"max |U^n| = {np.max(np.abs(es.u)):.1e}; extrapolation equals rho"


def galerkin_constant_sensor():
    g = make_grid(1.0, 256)
    m = constant_model(0.0, 1.0, sensor=0.5, x0_std=0.5)
    basis = NodalBasis(-6.0, 6.0, 49)
    obs = ObservationPath(g.times, np.r_[0.0, np.cumsum(RngStream(SEED, "obs").normals(256) / 16)][:, None])
    data = run_particles(m, g, 500, seed=SEED, obs=obs.y, observers=[NodalSources(m, basis)])
    src = data.observed[0]
    sol = galerkin_nodal(m, basis, src, obs.y, g, np.zeros(256), [monomial(1)], [1.0])
    return bool(np.all(src["a"] == 0) and np.all(src["o"] == 0) and np.all(sol.values == 0)), "sources vanish and U = 0"


def kalman_trivial():
    dt, M = 0.01, 200
    y0 = np.zeros((M + 1, 1))
    free = kalman_bucy(-1.0, 1.0, 0.0, y0, dt, 1.0, 2.0)
    # unconditioned moments: m' = -m, P' = -2P + 1
    m_ok = abs(free.mean[-1, 0] - (1 - dt) ** M) < 1e-12
    relax = kalman_bucy(0.0, 1.0, 1.0, y0, dt, 1.0, 1.0)
    return bool(m_ok and 0 < relax.mean[-1, 0] < 1), "H = 0 follows the prior ODE; zero data pulls the mean to 0"


def small_case():
    a = small_case_expectation([3.0], [1.0])
    b = small_case_expectation([1.0, 5.0], [0.5, 0.5])
    bits, p = bernoulli_table([0.3])
    c = small_case_expectation(bits[:, 0], p)
    return bool(a == 3.0 and b == 3.0 and abs(c - 0.3) < 1e-15), "point mass, fair coin and Bernoulli mean"


CHECKS = [
    grid_floor, grid_divisibility, rng_repeatable, generator_constants, o_tilde_cases, frozen_signal,
    observation_drift, spatial_transport, weights_trivial, cluster_weight_unit, ensemble_degenerate, residual_one,
    rho_collapse, spatial_matches_scalar, cluster_empty, cluster_prior_posterior, r_zero, u_constant_sensor,
    galerkin_constant_sensor, kalman_trivial, small_case,
]


def run_trivial(log=print) -> list[CheckResult]:
    out = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(fn.__name__, bool(ok), detail, time.perf_counter() - t0)
        log(res.line())
        out.append(res)
    return out
