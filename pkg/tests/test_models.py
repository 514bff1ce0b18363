import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from filterlab.errors import ConfigurationError
from filterlab.models import (
    apply_generator,
    apply_o_tilde,
    battery,
    bounded_nonlinear,
    builtin_gwn,
    cell_model,
    constant,
    constant_model,
    linear_gaussian,
    monomial,
    piecewise_model,
    polynomial,
    product,
    sensor_function,
    small_cluster_model,
    tanh_function,
)

points = hnp.arrays(float, st.tuples(st.integers(1, 20), st.just(1)), elements=st.floats(-3, 3))


def _fd_generator(model, phi, x, h=1e-4):
    """Independent route: central differences of phi with the model's drift and diffusion."""
    f = lambda z: phi(z)  # noqa: E731
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    a = model.diffusion_matrix(x)[:, 0, 0]
    return 0.5 * a * d2 + model.drift(x)[:, 0] * d1


@settings(max_examples=40, deadline=None)
@given(points, st.sampled_from(["x", "x2", "tanh"]))
def test_generator_matches_finite_differences(x, name):
    model = bounded_nonlinear()
    phi = battery([name])[0]
    assert np.allclose(apply_generator(model, phi, x), _fd_generator(model, phi, x), atol=1e-5)


def test_generator_kills_constants_and_gives_one_for_x2():
    x = np.linspace(-2, 2, 7)[:, None]
    for m in (bounded_nonlinear(), linear_gaussian(), constant_model(0.3, 2.0)):
        assert np.all(apply_generator(m, constant(1.0), x) == 0)
    assert np.allclose(apply_generator(constant_model(0.0, 1.0), monomial(2), x), 1.0)


def test_o_tilde_identity_case_and_constant_sensor():
    x = np.linspace(-1, 1, 5)[:, None]
    assert np.allclose(apply_o_tilde(linear_gaussian(F=0.0), monomial(1), 0, x), 1.0)
    assert np.all(apply_o_tilde(constant_model(sensor=3.0), tanh_function(), 0, x) == 0)


@settings(max_examples=30, deadline=None)
@given(points)
def test_o_tilde_scalar_formula(x):
    m = bounded_nonlinear()
    want = (1 + 0.3 * np.cos(x[:, 0])) ** 2 * (1 - np.tanh(x[:, 0]) ** 2) * (1 - np.tanh(x[:, 0]) ** 2)
    assert np.allclose(apply_o_tilde(m, tanh_function(), 0, x), want)


def test_o_tilde_symmetric_in_two_dimensions():
    m = linear_gaussian(F=-np.eye(2), G=[[1.0, 0.5], [0.0, 2.0]], H=[[1.0, -1.0]])
    x = np.random.default_rng(0).normal(size=(10, 2))
    G = np.array([[1.0, 0.5], [0.0, 2.0]])
    # phi = x0 x1: grad = (x1, x0); grad h = (1, -1)
    g = np.stack([x[:, 1], x[:, 0]], axis=1)
    want = np.einsum("ni,ij,jk,k->n", g, G, G.T, np.array([1.0, -1.0]))
    assert np.allclose(apply_o_tilde(m, product(0, 1, 2), 0, x), want)


@settings(max_examples=30)
@given(hnp.arrays(float, 5, elements=st.floats(-2, 2)), points)
def test_polynomial_derivatives(coeffs, x):
    p = polynomial(coeffs)
    h = 1e-5
    fd = (p(x + h) - p(x - h)) / (2 * h)
    assert np.allclose(p.grad(x)[:, 0], fd, atol=1e-5 * (1 + np.abs(fd).max()))


def test_battery_rejects_unknown_names():
    with pytest.raises(ConfigurationError):
        battery(["sin"])
    assert [f.name for f in battery()] == ["one", "x", "x2", "tanh"]


def test_sensor_function_and_gradients():
    m = bounded_nonlinear()
    x = np.linspace(-2, 2, 9)[:, None]
    h = sensor_function(m)
    assert np.allclose(h(x), np.tanh(x[:, 0]))
    assert np.allclose(h.grad(x)[:, 0], 1 - np.tanh(x[:, 0]) ** 2)


def test_linear_model_carries_oracle_data():
    m = builtin_gwn("linear_truncated")
    assert m.linear is not None and m.oracle_only and m.h_max == 10.0
    assert np.allclose(m.sensor(np.array([[20.0]])), 10.0)
    assert builtin_gwn("linear").poly["drift"] == [0.0, -0.5]


def test_unknown_builtin_and_bad_params():
    with pytest.raises(ConfigurationError):
        builtin_gwn("nope")
    with pytest.raises(ConfigurationError):
        builtin_gwn("bounded", bogus=1)
    with pytest.raises(ConfigurationError):
        bounded_nonlinear(eps=1.5)


def test_piecewise_model_is_continuous_table():
    tbl = {"breaks": [-1.0, 1.0], "coeffs": [[0.0], [0.0, 1.0], [1.0]]}
    m = piecewise_model(tbl, {"breaks": [], "coeffs": [[1.0]]}, tbl)
    x = np.array([[-2.0], [0.5], [3.0]])
    assert np.allclose(m.sensor(x)[:, 0], [0.0, 0.5, 1.0])


def test_cell_model_shapes_and_effective_diffusion():
    m = cell_model(cells=3)
    x = np.zeros((4, 1))
    assert m.kernel(x).shape == (4, 1, 3)
    assert m.sensor(x).shape == (4, 3)
    assert np.isclose(m.channel_masses.sum(), 1.0)
    a = m.diffusion_matrix(x)[:, 0, 0]
    manual = 0.8**2 + np.sum((0.25 * np.cos(np.pi * (np.arange(3) + 0.5) / 3)) ** 2 / 3)
    assert np.allclose(a, manual)


@pytest.mark.parametrize("kind", ["constant", "self_exciting", "count", "dominating"])
def test_cluster_intensities_bounded_by_lambda0(kind):
    m = small_cluster_model(4, kind)
    t = np.linspace(0, 1, 50)
    for e in range(4):
        for t_last, count in ((-np.inf, 0), (0.3, 1), (0.9, 3)):
            r = m.rate(e, t, t_last, count)
            assert np.all(r >= 0) and np.all(r <= m.lam0[e] + 1e-12)


@pytest.mark.parametrize("kind", ["constant", "self_exciting", "count"])
def test_cluster_integrals_match_quadrature(kind):
    from scipy.integrate import quad

    m = small_cluster_model(3, kind)
    for e in range(3):
        for t_last, count in ((-np.inf, 0), (0.2, 2)):
            a, b = 0.25, 0.9
            want = quad(lambda s: float(m.rate(e, s, t_last, count)), a, b, points=m.kinks(a, b, t_last, count) or None)[0]
            got = float(m.intensity.integral(e, a, b, t_last, count))
            assert np.isclose(got, want, atol=1e-10)


def test_cluster_model_validation():
    with pytest.raises(ConfigurationError):
        small_cluster_model(3, "mystery")
    with pytest.raises(ConfigurationError):
        small_cluster_model(3, gamma=-1.0)
