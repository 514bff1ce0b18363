import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from filterlab.engine import run_particles
from filterlab.errors import ConfigurationError
from filterlab.grid import RngStream, make_grid
from filterlab.models import bounded_nonlinear, cell_model, constant_model, linear_gaussian, scalar_model, small_cluster_model
from filterlab.sde import observation_for, simulate_signal, simulate_signal_spatial
from filterlab.weights import cluster_logweights, weight_cluster, weight_exact, weight_picard, weight_spatial


def _paths(M=64, seed=1, particle=0):
    g = make_grid(1.0, M)
    m = bounded_nonlinear()
    return g, m, simulate_signal(m, g, RngStream(seed, "signal", particle)), observation_for(m, g, seed)


def _picard_loop(h, y, stride, dt):
    """Reference frozen-sensor weight: each fine step uses h at the preceding coarse point."""
    out = [0.0]
    for k in range(len(y) - 1):
        hk = h[(k // stride) * stride]
        out.append(out[-1] + hk * (y[k + 1] - y[k]) - 0.5 * hk * hk * dt)
    return np.array(out)


def test_exact_weight_matches_loop():
    g, m, sig, obs = _paths()
    h = np.tanh(sig.x[:, 0])
    want = np.r_[0.0, np.cumsum(h[:-1] * np.diff(obs.y[:, 0]) - 0.5 * h[:-1] ** 2 * g.dt)]
    assert np.allclose(weight_exact(m, sig, obs, g).logw, want, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([1, 2, 4, 8, 16, 32, 64]), st.integers(0, 50))
def test_picard_weight_matches_loop_at_fine_points(n, particle):
    g, m, sig, obs = _paths(particle=particle)
    want = _picard_loop(np.tanh(sig.x[:, 0]), obs.y[:, 0], 64 // n, g.dt)
    assert np.allclose(weight_picard(m, sig, obs, g, n).logw, want, atol=1e-12)


def test_picard_collapses_to_exact():
    g, m, sig, obs = _paths()
    assert np.array_equal(weight_picard(m, sig, obs, g, 64).logw, weight_exact(m, sig, obs, g).logw)
    mc = constant_model(0.0, 1.0, sensor=0.6)
    s2 = simulate_signal(mc, g, RngStream(1, "signal"))
    for n in (4, 16):
        assert np.allclose(weight_picard(mc, s2, obs, g, n).logw, weight_exact(mc, s2, obs, g).logw, atol=1e-13)


def test_zero_sensor_gives_unit_weight():
    g, _, _, obs = _paths()
    m = constant_model(0.0, 1.0, sensor=0.0)
    sig = simulate_signal(m, g, RngStream(0, "signal"))
    assert np.all(weight_exact(m, sig, obs, g).L == 1.0)


@pytest.mark.parametrize("model", [bounded_nonlinear(), cell_model(cells=2)], ids=["bounded", "cells2"])
def test_reference_martingale_mean_one(model):
    g = make_grid(1.0, 64)
    data = run_particles(model, g, 100_000, seed=21, obs=None, checkpoints=[16, 32, 64])
    L = np.exp(data.logw)
    m, se = L.mean(axis=1), L.std(axis=1, ddof=1) / np.sqrt(L.shape[1])
    assert np.all(np.abs(m - 1) <= 4 * se)


def test_spatial_one_cell_equals_scalar_weight():
    g = make_grid(1.0, 64)
    sp = cell_model(cells=1, alpha=0.0)
    sc = scalar_model(
        "ref", drift=lambda x: -np.tanh(x), diffusion=lambda x: np.full_like(x, 0.8), sensor=np.tanh,
        sensor_d1=np.zeros_like, sensor_d2=np.zeros_like, x0_std=0.5,
    )
    obs = observation_for(sp, g, 3)
    sig = simulate_signal_spatial(sp, g, RngStream(3, "signal"), obs)
    assert np.allclose(weight_spatial(sp, sig, obs, g).logw, weight_exact(sc, sig, obs, g).logw, atol=1e-14)
    with pytest.raises(ConfigurationError):
        weight_spatial(sc, sig, obs, g)


def test_shape_mismatch_rejected():
    g, m, sig, obs = _paths()
    with pytest.raises(ConfigurationError):
        weight_exact(m, sig, obs, make_grid(1.0, 32))


# --- cluster weights ----------------------------------------------------------


def _cluster_oracle(model, theta, times, marks, t_eval):
    """Numerical quadrature of the drift plus explicit jump products."""
    logw, t_last, count, t_prev = 0.0, -np.inf, 0, 0.0
    for th, t, u in zip(theta, times, marks):
        if t > t_eval:
            break
        logw -= quad(lambda s: sum(model.nu[e] * (model.rate(e, s, t_last, count) - model.lam0[e]) for e in range(model.n_marks)),
                     t_prev, t, limit=200, points=np.linspace(t_prev, t, 20)[1:-1])[0]
        if th:
            logw += np.log(model.rate(u, t, t_last, count) / model.lam0[u])
            t_last, count = t, count + 1
        t_prev = t
    logw -= quad(lambda s: sum(model.nu[e] * (model.rate(e, s, t_last, count) - model.lam0[e]) for e in range(model.n_marks)),
                 t_prev, t_eval, limit=200, points=np.linspace(t_prev, t_eval, 20)[1:-1])[0]
    return logw


@pytest.mark.parametrize("kind", ["constant", "self_exciting", "count"])
def test_cluster_weight_matches_quadrature(kind):
    m = small_cluster_model(3, kind)
    times = np.array([0.1, 0.35, 0.4, 0.8])
    marks = np.array([0, 2, 1, 0])
    for theta in ([1, 0, 1, 1], [0, 1, 1, 0], [1, 1, 1, 1]):
        got = weight_cluster(m, theta, times, marks, [0.3, 0.6, 1.0]).logw
        want = [_cluster_oracle(m, theta, times, marks, t) for t in (0.3, 0.6, 1.0)]
        assert np.allclose(got, want, atol=1e-7)


def test_cluster_weight_one_when_intensity_is_reference():
    m = small_cluster_model(3, "dominating")
    lw = cluster_logweights(m, np.array([[1, 0, 1], [1, 1, 1]]), [0.2, 0.5, 0.6], [0, 1, 2], [0.0, 0.55, 1.0])
    assert np.allclose(lw, 0.0)


def test_cluster_left_limit_excludes_jump():
    m = small_cluster_model(2, "constant")
    right = cluster_logweights(m, [[1]], [0.5], [0], [0.5])[0, 0]
    left = cluster_logweights(m, [[1]], [0.5], [0], [0.5], left_limit=True)[0, 0]
    assert np.isclose(right - left, np.log(0.5))


def test_cluster_inputs_validated():
    m = small_cluster_model(2)
    with pytest.raises(ConfigurationError):
        cluster_logweights(m, [[1, 0]], [0.5, 0.2], [0, 1], [1.0])
    with pytest.raises(ConfigurationError):
        cluster_logweights(m, [[1]], [0.5, 0.6], [0, 1], [1.0])
