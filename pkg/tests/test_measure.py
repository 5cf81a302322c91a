"""Grid measures: constructors, moments, renormalization, serialization.

The log-domain renormalization is checked against an extended-precision
softmax oracle so that overflow handling is verified independently of
the implementation.
"""

import io
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmonitor.errors import ConfigError, MeasureDiedError
from qmonitor.measure import (
    GridMeasure,
    mean_and_variance,
    measure_from_csv,
    measure_to_csv,
    moment,
    connected_moment_x,
    register_test_function,
    renormalize,
    sample_nodes,
    to_observable_units,
    to_position_units,
)
from qmonitor.noise import RngStream


def softmax_oracle(log_weights):
    """Node masses via 60-digit arithmetic."""
    with mpmath.workdps(60):
        ws = [mpmath.exp(mpmath.mpf(float(v))) for v in log_weights]
        total = mpmath.fsum(ws)
        return np.array([float(w / total) for w in ws])


def test_two_atoms_masses_and_moments():
    mu = GridMeasure.two_atoms(-1.0, 1.0, 0.25)
    np.testing.assert_allclose(mu.masses(), [0.25, 0.75], rtol=1e-15)
    m, v = mean_and_variance(mu)
    assert m == pytest.approx(0.5, abs=1e-15)
    assert v == pytest.approx(0.75, abs=1e-15)


def test_gaussian_grid_moments():
    mu = GridMeasure.gaussian(0.3, 0.7, x_min=-6.0, dx=0.01, n_points=1201)
    m, v = mean_and_variance(mu)
    assert m == pytest.approx(0.3, abs=1e-9)
    assert v == pytest.approx(0.49, abs=1e-9)


def test_point_mass_snaps_to_nearest_node():
    mu = GridMeasure.point_mass(0.503, x_min=0.0, dx=0.1, n_points=11)
    masses = mu.masses()
    assert masses[5] == pytest.approx(1.0, abs=1e-15)
    assert np.sum(masses) == pytest.approx(1.0, abs=1e-15)


def test_moment_against_direct_sum():
    mu = GridMeasure.two_atoms(-2.0, 3.0, 0.4)
    assert moment(mu, lambda x: x * x) == pytest.approx(
        0.4 * 4.0 + 0.6 * 9.0, abs=1e-14)


def test_connected_moment_is_covariance():
    mu = GridMeasure.two_atoms(-1.0, 1.0, 0.5)
    # Cov(x, x^3) = E[x^4] - E[x]E[x^3] = 1 here
    assert connected_moment_x(mu, lambda x: x**3) == pytest.approx(1.0,
                                                                   abs=1e-14)


def test_renormalize_matches_extended_precision_softmax():
    rng = np.random.default_rng(7)
    for spread in (1.0, 50.0, 700.0):
        lw = rng.uniform(-spread, spread, size=40)
        mu = GridMeasure(0.0, 0.1, np.array(lw) - math.log(0.1),
                         normalized=False)
        out = renormalize(mu)
        np.testing.assert_allclose(out.masses(), softmax_oracle(lw),
                                   rtol=1e-13, atol=1e-300)


def test_renormalize_reports_deficit():
    mu0 = GridMeasure.two_atoms(-1.0, 1.0, 0.5)
    shifted = GridMeasure(mu0.x_min, mu0.dx, mu0.log_weights + 3.0,
                          normalized=False)
    out, deficit = renormalize(shifted, return_deficit=True)
    assert out.normalized
    assert deficit == pytest.approx(math.expm1(3.0), rel=1e-12)


def test_dead_measure_raises():
    mu = GridMeasure(0.0, 1.0, np.array([-np.inf, -np.inf]),
                     normalized=False)
    with pytest.raises(MeasureDiedError):
        renormalize(mu)


def test_unit_conversions_roundtrip():
    mu = GridMeasure.two_atoms(-1.0, 1.0, 0.3)
    back = to_position_units(to_observable_units(mu, 0.7), 0.7)
    np.testing.assert_allclose(back.x, mu.x, rtol=1e-15)
    np.testing.assert_allclose(back.masses(), mu.masses(), rtol=1e-14)


def test_observable_units_scales_nodes():
    mu = GridMeasure.two_atoms(-1.0, 1.0, 0.5)
    alpha = to_observable_units(mu, 2.0)
    assert alpha.x.tolist() == [-4.0, 4.0]
    np.testing.assert_allclose(alpha.masses(), mu.masses(), rtol=1e-14)


def test_register_test_function_rejects_unbounded():
    mu = GridMeasure.gaussian(0.0, 1.0, x_min=-5.0, dx=0.1, n_points=101)
    with pytest.raises(ConfigError), np.errstate(divide="ignore"):
        register_test_function(lambda x: 1.0 / x, "1/x", mu)
    phi = register_test_function(lambda x: x * x, "x^2", mu)
    assert phi.label == "x^2"


def test_sample_nodes_frequencies():
    mu = GridMeasure.two_atoms(-1.0, 1.0, 0.25)
    gen = RngStream(4242, 0).generator()
    draws = sample_nodes(mu, gen, size=20000)
    freq = np.mean(draws < 0)
    assert abs(freq - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 20000)


def test_csv_roundtrip():
    mu = GridMeasure.gaussian(0.1, 0.4, x_min=-3.0, dx=0.05, n_points=121)
    buf = io.StringIO()
    measure_to_csv(mu, buf)
    back = measure_from_csv(io.StringIO(buf.getvalue()))
    np.testing.assert_allclose(back.x, mu.x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.masses(), mu.masses(), rtol=1e-13)


@given(st.lists(st.floats(min_value=-200.0, max_value=200.0),
                min_size=2, max_size=30),
       st.floats(min_value=-300.0, max_value=300.0))
@settings(max_examples=60, deadline=None)
def test_masses_invariant_under_log_shift(log_ws, shift):
    """Adding a constant to all log weights never changes the masses."""
    lw = np.asarray(log_ws)
    a = renormalize(GridMeasure(0.0, 0.5, lw, normalized=False))
    b = renormalize(GridMeasure(0.0, 0.5, lw + shift, normalized=False))
    np.testing.assert_allclose(a.masses(), b.masses(), rtol=0, atol=1e-12)
    assert abs(math.fsum(a.masses()) - 1.0) < 1e-10


@given(st.lists(st.floats(min_value=-50.0, max_value=50.0),
                min_size=2, max_size=25))
@settings(max_examples=60, deadline=None)
def test_normalized_masses_sum_to_one(log_ws):
    mu = renormalize(GridMeasure(-1.0, 0.25, np.asarray(log_ws),
                                 normalized=False))
    assert abs(math.fsum(mu.masses()) - 1.0) < 1e-10
