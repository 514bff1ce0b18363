import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from filterlab.errors import ConfigurationError
from filterlab.grid import RngStream, gaussian_increments, make_grid, normal_table, stream_keys, uniform_table


def test_tau_floor_and_fixed_points():
    g = make_grid(1.0, 8, 4)
    assert g.tau(0.3) == 0.25
    assert g.tau(0.25) == 0.25
    assert g.tau_index(g.step_of(0.3 - 0.3 % 0.125)) == 2


def test_indivisible_grid_names_the_field():
    with pytest.raises(ConfigurationError) as err:
        make_grid(1.0, 6, 4)
    assert err.value.field == "grid.M"


@given(st.integers(1, 6), st.integers(1, 8), st.integers(1, 5))
def test_stride_times_coarse_points_is_M(log_n, mult, T):
    n = 2**log_n
    M = n * T * mult
    g = make_grid(T, M)
    assert g.coarse_stride_for(n) * n * T == M


@given(st.sampled_from([1, 2, 4, 8, 16, 32, 64]), st.floats(0, 1, allow_nan=False))
def test_tau_is_last_coarse_point(n, s):
    g = make_grid(1.0, 4096, n)
    t = g.tau(s)
    assert t <= s + 1e-12 and s - t < 1.0 / n + 1e-12
    assert abs(t * n - round(t * n)) < 1e-9


def test_streams_are_pure_functions_of_their_ids():
    a = RngStream(5, "signal", 7, 2).normals(500)
    b = RngStream(5, "signal", 7, 2).normals(500)
    c = RngStream(5, "signal", 8, 2).normals(500)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # a later window reads the same counters
    assert np.array_equal(RngStream(5, "signal", 7, 2).normals(100, start=400), a[400:])


def test_particle_columns_do_not_depend_on_batch():
    full = normal_table(stream_keys(3, "signal", np.arange(10), 0), 0, 50)
    part = normal_table(stream_keys(3, "signal", np.arange(4, 7), 0), 0, 50)
    assert np.array_equal(full[:, 4:7], part)


def test_normals_pass_moment_and_ks_checks():
    z = RngStream(1, "obs").normals(1_000_000)
    se = 1 / np.sqrt(len(z))
    assert abs(z.mean()) < 4 * se
    assert abs(z.var() - 1) < 4 * np.sqrt(2) * se
    assert stats.kstest(z[:200_000], "norm").pvalue > 1e-4


def test_uniforms_in_unit_interval_and_uniform():
    u = uniform_table(stream_keys(2, "theta", np.arange(4), 0), 0, 50_000).ravel()
    assert u.min() > 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 1e-4


def test_tags_give_uncorrelated_streams():
    a = RngStream(9, "signal").normals(100_000)
    b = RngStream(9, "obs").normals(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(len(a))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.sampled_from([16, 64, 128]))
def test_increment_table_shape_and_scale(dim, M):
    g = make_grid(2.0, M)
    inc = gaussian_increments(RngStream(4, "signal"), g, dim)
    assert inc.shape == (M, dim)
    raw = RngStream(4, "signal").normals(M * dim).reshape(M, dim)
    assert np.allclose(inc, raw * np.sqrt(g.dt))


def test_seed_must_fit_64_bits():
    with pytest.raises(ConfigurationError):
        RngStream(2**64, "signal")
