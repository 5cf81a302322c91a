"""Collapsed Gaussian packets and the classical Langevin limit.

Fixed-point and dispersion oracles come straight from evaluating the
algebra with cmath, independently of the library routines.
"""

import cmath
import math

import numpy as np
import pytest

from qmonitor.errors import ConfigError, IntegrationError
from qmonitor.noise import NoisePath, RngStream, TimeGrid, sample_noise
from qmonitor.packet import (
    GaussianPacket,
    PhysicalScales,
    Potential,
    a_drift,
    a_infinity,
    double_scaling_study,
    langevin_batch,
    langevin_harmonic_exact,
    langevin_step,
    packet_batch,
    packet_dispersions,
    packet_step,
    simulate_langevin,
    simulate_packet,
    variance_closed_form,
    variance_large_time,
    variance_small_time,
)

SEED = 66102


def test_scale_identities():
    scales = PhysicalScales.from_omega_ell(2.3, 0.7)
    assert scales.omega == pytest.approx(2.3, rel=1e-14)
    assert scales.ell == pytest.approx(0.7, rel=1e-14)
    # ell^4 = hbar / (m gamma^2) and eps = omega^3 ell^2
    assert scales.ell**4 == pytest.approx(
        scales.hbar / (scales.mass * scales.gamma**2), rel=1e-12)
    assert scales.epsilon == pytest.approx(2.3**3 * 0.7**2, rel=1e-12)


def test_free_space_fixed_point():
    scales = PhysicalScales.from_omega_ell(1.0, 1.0)
    a_inf = a_infinity(scales, 0.0)
    assert a_inf == pytest.approx(0.5 - 0.5j, abs=1e-14)
    assert abs(a_drift(a_inf, scales, 0.0)) < 1e-13


def test_fixed_point_with_curvature_oracle():
    # ddv = m omega^2 gives a_inf ell^2 = sqrt((1 + i/2) / (2i))
    scales = PhysicalScales.from_omega_ell(1.0, 1.0)
    ddv = scales.mass * scales.omega**2
    ref = cmath.sqrt((1.0 + 0.5j) / 2.0j)
    a_inf = a_infinity(scales, ddv)
    assert a_inf.real == pytest.approx(ref.real, rel=1e-13)
    assert a_inf.imag == pytest.approx(ref.imag, rel=1e-13)
    assert abs(a_drift(a_inf, scales, ddv)) < 1e-13


def test_dispersions_at_the_fixed_point():
    scales = PhysicalScales.from_omega_ell(3.0, 0.5)
    packet = GaussianPacket(0.0, 0.0, a_infinity(scales, 0.0), 0.0)
    disp = packet_dispersions(packet, scales)
    assert disp.sigma_x == pytest.approx(2.0**-0.25 * scales.ell, rel=1e-12)
    assert disp.sigma_v == pytest.approx(
        2.0**-0.75 * scales.omega * scales.ell, rel=1e-12)
    assert disp.sigma_v / disp.sigma_x == pytest.approx(
        scales.omega / math.sqrt(2.0), rel=1e-12)


def test_packet_noise_coefficients_at_fixed_point():
    """x picks up sqrt(eps)/omega dW and v picks up sqrt(eps) dW."""
    scales = PhysicalScales.from_omega_ell(4.0, 0.3)
    a_inf = a_infinity(scales, 0.0)
    packet = GaussianPacket(0.0, 0.0, a_inf, 0.0)
    dt, dW = 1e-12, 1.0
    stepped, _ = packet_step(packet, scales, Potential.free(), dt, dW)
    eps = scales.epsilon
    assert stepped.xbar == pytest.approx(math.sqrt(eps) / scales.omega,
                                         rel=1e-9)
    assert stepped.vbar == pytest.approx(math.sqrt(eps), rel=1e-9)


def test_packet_width_stays_at_fixed_point():
    scales = PhysicalScales.from_omega_ell(1.0, 1.0)
    Omega = 0.25
    pot = Potential.harmonic(Omega)
    ddv = scales.mass * Omega**2
    a0 = a_infinity(scales, ddv)
    packet = GaussianPacket(0.2, 0.0, a0, 0.0)
    for _ in range(50):
        packet, _ = packet_step(packet, scales, pot, 1e-3, 0.0)
    assert packet.a == pytest.approx(a0, rel=1e-10)


def test_packet_requires_contracting_width():
    with pytest.raises(ConfigError):
        GaussianPacket(0.0, 0.0, -1.0 + 0.5j, 0.0)


def test_potential_derivative_check():
    Potential.harmonic(2.0).check_derivatives(np.array([-1.0, 0.3, 2.0]))
    bad = Potential(V=lambda x: x * x, dV=lambda x: 3.0 * x,
                    ddV=lambda x: 2.0 * np.ones_like(x), label="bad")
    with pytest.raises(ConfigError):
        bad.check_derivatives(np.array([1.0]))


def test_harmonic_exact_solution_without_noise():
    grid = TimeGrid(dt=1e-3, n_steps=1000)
    noise = NoisePath(grid, np.zeros(grid.n_steps))
    times, x, v = langevin_harmonic_exact(1.5, -0.3, 2.0, 1.0, noise)
    ref_x = 1.5 * np.cos(2.0 * times) - 0.15 * np.sin(2.0 * times)
    ref_v = -3.0 * np.sin(2.0 * times) - 0.3 * np.cos(2.0 * times)
    np.testing.assert_allclose(x, ref_x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(v, ref_v, rtol=0, atol=1e-12)


def test_variance_closed_form_limits():
    eps = 1.3
    assert variance_closed_form(0.5, 0.0, eps) == pytest.approx(
        eps * 0.125 / 3.0, rel=1e-12)
    assert variance_small_time(0.5, eps) == pytest.approx(eps * 0.125 / 3.0,
                                                          rel=1e-14)
    t = 1e-3
    full = variance_closed_form(t, 1.0, eps)
    assert full == pytest.approx(eps * t**3 / 3.0, rel=1e-4)
    t = 1e4
    assert variance_closed_form(t, 1.0, eps) == pytest.approx(
        variance_large_time(t, 1.0, eps), rel=1e-3)


def test_simulate_langevin_matches_stepper():
    grid = TimeGrid(dt=0.01, n_steps=30)
    pot = Potential.harmonic(1.0)
    noise = sample_noise(grid, RngStream(SEED, 0))
    times, x, v = simulate_langevin(0.5, 0.1, pot, 0.7, grid,
                                    RngStream(SEED, 0))
    xs, vs = 0.5, 0.1
    for k in range(grid.n_steps):
        xs, vs = langevin_step(xs, vs, pot, 0.7, grid.dt,
                               noise.increments[k])
    assert x[-1] == pytest.approx(xs, abs=1e-14)
    assert v[-1] == pytest.approx(vs, abs=1e-14)


def test_langevin_batch_matches_single_paths():
    grid = TimeGrid(dt=0.02, n_steps=25)
    pot = Potential.harmonic(1.0)
    _, xb, vb = langevin_batch(0.0, 0.0, pot, 1.0, grid, RngStream(SEED, 0),
                               3, record_times=[0.5], stream_offset=1)
    for i in range(3):
        _, x, v = simulate_langevin(0.0, 0.0, pot, 1.0, grid,
                                    RngStream(SEED, 1 + i))
        assert xb[i, -1] == pytest.approx(x[-1], abs=1e-14)
        assert vb[i, -1] == pytest.approx(v[-1], abs=1e-14)


def test_packet_batch_matches_single_paths():
    scales = PhysicalScales.from_omega_ell(20.0, 0.1)
    pot = Potential.harmonic(1.0)
    grid = TimeGrid(dt=5e-4, n_steps=100)
    ens = packet_batch(1.0, 0.0, scales, pot, grid, RngStream(SEED, 0), 3)
    for i in range(3):
        path = simulate_packet(1.0, 0.0, scales, pot, grid,
                               RngStream(SEED, i))
        assert ens.xbar[i, -1] == pytest.approx(path.xbar[-1], abs=1e-12)
        assert ens.vbar[i, -1] == pytest.approx(path.vbar[-1], abs=1e-12)


def test_double_scaling_study_is_deterministic():
    kwargs = dict(eps=1.0, Omega=1.0, x0=1.0, v0=0.0, t_final=0.5,
                  n_paths=100, dt_max_factor=0.01)
    a = double_scaling_study((10.0, 20.0), RngStream(SEED, 0), **kwargs)
    b = double_scaling_study((10.0, 20.0), RngStream(SEED, 0), **kwargs)
    for ra, rb in zip(a.rows, b.rows):
        assert ra.ks_stat == rb.ks_stat
        assert ra.var_packet == rb.var_packet
    assert a.rows[0].sigma_x_pred == pytest.approx(
        2.0**-0.25 * math.sqrt(1.0 / 10.0**3), rel=1e-12)


def test_double_scaling_rejects_unresolvable_grids():
    # step counts 1500 and 1501 are coprime; the common refinement blows up
    with pytest.raises(ConfigError, match="commensurate"):
        double_scaling_study((15.0, 15.01), RngStream(SEED, 0),
                             n_paths=100, t_final=1.0, dt_max_factor=0.01)
