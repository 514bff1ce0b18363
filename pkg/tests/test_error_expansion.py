import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filterlab.error_expansion import (
    convergence_fit,
    cross_variation_closed,
    cross_variation_sum,
    quadratic_variation_closed,
    quadratic_variation_sum,
    r_limit_test,
    r_path,
    richardson,
    rms_with_se,
    sawtooth,
    sup_square_moment,
    u_n_series,
)
from filterlab.experiments import picard_sweep
from filterlab.filter_gwn import build_ensemble
from filterlab.grid import make_grid
from filterlab.models import battery, bounded_nonlinear, constant_model, monomial
from filterlab.sde import ObservationPath, observation_for

NS = [4, 8, 16, 32, 64]


def test_sawtooth_shape_and_range():
    g = make_grid(1.0, 64)
    s = sawtooth(g, 4)
    assert s.shape == (64,) and s[0] == -0.5 and s.max() < 0.5
    assert np.allclose(s[:16], np.arange(16) / 16 - 0.5)


def test_r_path_zero_and_loop():
    g = make_grid(1.0, 128)
    assert np.all(r_path(ObservationPath(g.times, np.zeros((129, 1))), g, 8).r == 0)
    y = observation_for(bounded_nonlinear(), g, 3).y
    r = r_path(y, g, 8).r[:, 0]
    acc, want = 0.0, [0.0]
    for k in range(128):
        s = k * g.dt
        acc += 2 * np.sqrt(3) * (8 * (s - np.floor(8 * s + 1e-12) / 8) - 0.5) * (y[k + 1, 0] - y[k, 0])
        want.append(acc)
    assert np.allclose(r, want, atol=1e-12)


@settings(max_examples=30)
@given(st.sampled_from(NS), st.sampled_from([1, 2, 4, 16]), st.data())
def test_quadratic_and_cross_variation_closed_forms(n, mult, data):
    g = make_grid(1.0, 64 * mult * 4)
    k = data.draw(st.integers(1, n))
    qv = quadratic_variation_sum(g, n, k)
    assert np.isclose(qv, quadratic_variation_closed(g, n, k), rtol=1e-12)
    S = g.coarse_stride_for(n)
    assert abs(qv - k / n) <= 2 * k / (n * S * S) + 1e-12
    cv = cross_variation_sum(g, n, k)
    assert np.isclose(cv, cross_variation_closed(g, n, k), rtol=1e-10, atol=1e-14)
    assert abs(cv) <= 2 * k * n / g.fine_steps


def test_quadratic_variation_converges_to_k_over_n():
    errs = [abs(quadratic_variation_sum(make_grid(1.0, M), 8, 5) - 5 / 8) for M in (64, 256, 1024, 4096)]
    assert np.all(np.diff(np.log(errs)) < 0)
    assert errs[-1] < 1e-4


def test_r_limit_moments():
    st_ = r_limit_test(make_grid(1.0, 4096), [8, 64], 4000, 5)
    for s in st_:
        assert abs(s.var - 1) < 4 * s.var_se + 2 / (4096 / s.n) ** 2
        assert abs(s.corr_rr) <= 4 * s.corr_rr_se


def test_constant_sensor_gives_zero_error():
    g = make_grid(1.0, 64)
    m = constant_model(0.0, 1.0, sensor=0.5, x0_std=1.0)
    ens = build_ensemble(m, g, 300, (4, 8, 16), 0, observation_for(m, g, 0), checkpoints=[0.5, 1.0])
    es = u_n_series(ens, battery(["x", "x2"]), [4, 8, 16], [0.5, 1.0])
    assert np.max(np.abs(es.u)) < 1e-12
    assert np.allclose(richardson(es.rho_n[:, 0], es.rho_n[:, 1]), es.rho, atol=1e-13)


def test_u_equals_scaled_gap_of_estimates():
    g = make_grid(1.0, 256)
    m = bounded_nonlinear()
    ens = build_ensemble(m, g, 4000, (4, 16), 2, observation_for(m, g, 2), checkpoints=[0.5, 1.0])
    es = u_n_series(ens, [monomial(1)], [4, 16], [0.5, 1.0])
    for i, n in enumerate([4, 16]):
        assert np.allclose(es.u[0, i], n * (es.rho[0] - es.rho_n[0, i]), rtol=1e-9, atol=1e-12)
    assert np.all(es.se > 0)
    assert len(list(es.rows())) == 4


def test_richardson_cancels_first_order_term():
    n = np.array([4.0, 8, 16, 32])
    rho = 0.3
    rho_n = rho - 0.7 / n - 0.2 / n**2
    rho_2n = rho - 0.7 / (2 * n) - 0.2 / (2 * n) ** 2
    assert np.allclose(richardson(rho_n, rho_2n) - rho, 0.1 / n**2)
    assert np.isclose(richardson(1.0, 1.0), 1.0)


@pytest.mark.parametrize("power", [1, 2])
def test_convergence_fit_on_manufactured_errors(power):
    n = np.array(NS, dtype=float)
    errs = np.tile(0.3 / n**power, (5, 1))
    fit = convergence_fit("x", n, errs)
    assert np.isclose(fit.slope, -power) and fit.slope_se < 1e-10
    assert not np.isfinite(convergence_fit("x", [4], errs[:, :1]).slope)


def test_rms_and_sup_moment():
    x = np.random.default_rng(0).normal(size=(400, 3))
    rms, se = rms_with_se(x)
    assert np.allclose(rms, np.sqrt((x**2).mean(0)))
    est, se2 = sup_square_moment(x)
    assert np.isclose(est, np.mean(np.max(x**2, axis=1))) and se2 > 0


def test_small_sweep_is_first_order():
    g = make_grid(1.0, 512)
    sw = picard_sweep(bounded_nonlinear(), g, battery(["x", "tanh"]), NS, 20_000, 3, 6, [1.0])
    err = sw.abs_error()
    for p in range(2):
        assert -1.4 < convergence_fit("", NS, err[:, p, :, -1]).slope < -0.6


def test_sawtooth_martingales_at_n_and_2n_are_half_correlated():
    # the first-order term does not cancel pathwise under extrapolation
    g = make_grid(1.0, 1024)
    assert np.isclose(12 * np.mean(sawtooth(g, 8) * sawtooth(g, 16)), 0.5, atol=1e-3)
    reps = 3000
    ends = np.empty((reps, 2))
    for r in range(reps):
        y = ObservationPath(g.times, np.r_[0.0, np.cumsum(np.random.default_rng(r).normal(size=1024)) / 32][:, None])
        ends[r] = [r_path(y, g, 8).r[-1, 0], r_path(y, g, 16).r[-1, 0]]
    c = np.corrcoef(ends.T)[0, 1]
    assert abs(c - 0.5) < 4 * (1 - 0.25) / np.sqrt(reps)
