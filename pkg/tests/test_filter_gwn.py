import numpy as np
import pytest

from filterlab.errors import ConfigurationError
from filterlab.filter_gwn import (
    build_ensemble,
    exchangeable_average_convergence,
    filter_path,
    innovation_statistics,
    innovation_test,
    ks_residual,
    rho,
    zakai_residual,
)
from filterlab.grid import make_grid
from filterlab.models import battery, bounded_nonlinear, constant, constant_model, linear_gaussian, monomial
from filterlab.oracle import kalman_for_model
from filterlab.sde import observation_for, simulate_pairs_P


@pytest.fixture(scope="module")
def bounded_ensemble():
    g = make_grid(1.0, 256)
    m = bounded_nonlinear()
    obs = observation_for(m, g, 4)
    return build_ensemble(m, g, 20_000, (4, 16), 4, obs, checkpoints=[0.25, 0.5, 1.0], track=battery(), scheme="euler")


def test_single_particle_estimate_is_the_particle():
    g = make_grid(1.0, 32)
    ens = build_ensemble(linear_gaussian(), g, 1, (), 0, observation_for(linear_gaussian(), g, 0))
    e = rho(ens, monomial(1), 1.0)
    assert e.rho == ens.state(1.0)[0, 0] * ens.weights(1.0)[0]
    assert e.pi == ens.state(1.0)[0, 0]


def test_zero_sensor_is_plain_empirical_law():
    g = make_grid(1.0, 32)
    m = constant_model(0.0, 1.0, sensor=0.0, x0_std=1.0)
    ens = build_ensemble(m, g, 5000, (), 0, observation_for(m, g, 0))
    assert np.all(ens.weights(1.0) == 1.0)
    assert rho(ens, constant(1.0), 1.0).rho == 1.0
    assert np.isclose(rho(ens, monomial(1), 1.0).rho, ens.state(1.0)[:, 0].mean())


def test_full_resolution_frozen_weights_equal_exact():
    g = make_grid(1.0, 64)
    m = bounded_nonlinear()
    ens = build_ensemble(m, g, 2000, (64,), 1, observation_for(m, g, 1))
    assert rho(ens, monomial(2), 1.0).rho == rho(ens, monomial(2), 1.0, 64).rho
    with pytest.raises(ConfigurationError):
        ens.log_weights(1.0, 8)


def test_kalman_oracle_on_one_path():
    g = make_grid(1.0, 512)
    m = linear_gaussian(clip=10.0)
    _, ys = simulate_pairs_P(m, g, 3, 1)
    ens = build_ensemble(m, g, 50_000, (), 3, ys[:, 0], replicate=1)
    kf = kalman_for_model(m, ys[:, 0], g.dt)
    e1, e2 = rho(ens, monomial(1), 1.0), rho(ens, monomial(2), 1.0)
    mT, PT = kf.mean[-1, 0], kf.cov[-1, 0, 0]
    assert abs(e1.pi - mT) <= 4 * e1.pi_se
    assert abs(e2.pi - (PT + mT**2)) <= 4 * e2.pi_se


@pytest.mark.parametrize("name", ["one", "x", "x2", "tanh"])
def test_residuals_within_four_se(bounded_ensemble, name):
    phi = battery([name])[0]
    for fn in (zakai_residual, ks_residual):
        r = fn(bounded_ensemble, phi, [0.25, 0.5, 1.0])
        assert r.within(4.0), (r.kind, r.residual, r.se)


def test_normalized_residual_of_one_is_exactly_zero(bounded_ensemble):
    r = ks_residual(bounded_ensemble, constant(1.0), [0.25, 0.5, 1.0])
    assert np.max(np.abs(r.residual)) < 1e-12


def test_residual_needs_tracked_features():
    g = make_grid(1.0, 32)
    m = bounded_nonlinear()
    ens = build_ensemble(m, g, 100, (), 0, observation_for(m, g, 0))
    with pytest.raises(ConfigurationError):
        zakai_residual(ens, monomial(1), [1.0])


def test_filter_path_is_normalized_mean(bounded_ensemble):
    p = filter_path(bounded_ensemble, "x")
    e = rho(bounded_ensemble, monomial(1), 1.0)
    assert np.isclose(p[-1], e.pi, rtol=1e-10)


@pytest.mark.parametrize("threads", [2, 3])
def test_results_independent_of_thread_count(threads):
    g = make_grid(1.0, 64)
    m = bounded_nonlinear()
    obs = observation_for(m, g, 6)
    kw = dict(checkpoints=[0.5, 1.0], track=battery(["x"]), block_size=777)
    a = build_ensemble(m, g, 5000, (4, 8), 6, obs, **kw)
    b = build_ensemble(m, g, 5000, (4, 8), 6, obs, threads=threads, **kw)
    assert np.array_equal(a.data.x, b.data.x)
    assert np.array_equal(a.data.logw_n, b.data.logw_n)
    assert np.array_equal(a.step_sums, b.step_sums)


def test_block_size_changes_only_summation_order():
    g = make_grid(1.0, 64)
    m = bounded_nonlinear()
    obs = observation_for(m, g, 6)
    kw = dict(checkpoints=[0.5, 1.0], track=battery(["x"]))
    a = build_ensemble(m, g, 5000, (4,), 6, obs, block_size=777, **kw)
    b = build_ensemble(m, g, 5000, (4,), 6, obs, block_size=4096, **kw)
    # per-particle quantities are bit-identical; group sums straddling a block edge may differ in the last bit
    assert np.array_equal(a.data.x, b.data.x) and np.array_equal(a.data.logw, b.data.logw)
    assert np.allclose(a.step_sums, b.step_sums, rtol=0, atol=1e-12 * np.abs(a.step_sums).max())


def test_innovations_behave_like_brownian_motion():
    g = make_grid(1.0, 128)
    stats, paths = innovation_test(bounded_nonlinear(), g, 200, 2000, 9)
    assert paths.shape == (200, 129)
    assert all(stats.passed.values()), stats


def test_innovation_statistics_reject_drifted_paths():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 65)
    bm = np.concatenate([np.zeros((500, 1)), np.cumsum(rng.normal(size=(500, 64)) / 8, axis=1)], axis=1)
    assert all(innovation_statistics(bm, 1.0).passed.values())
    assert not innovation_statistics(bm + t, 1.0).passed["mean"]


def test_exchangeable_subsets_converge_at_root_rate(bounded_ensemble):
    tab = exchangeable_average_convergence(bounded_ensemble, monomial(1), [0.5, 1.0], fractions=(64, 16, 4), subsets=200)
    assert abs(tab.slope + 0.5) < 0.15, tab
