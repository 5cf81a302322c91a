"""Filtering of a static observable from the integrated signal.

Oracles used here are derived independently of the library code:

* two-atom posterior: for atoms at +-1 with equal prior mass and
  gamma = 1/2, the posterior mean is tanh(S_t) for every t, and the
  posterior variance is 1 - tanh(S_t)^2;
* Gaussian prior: completing the square gives posterior variance
  1 / (1/sigma0^2 + 4 gamma^2 t) and mean
  (m0/sigma0^2 + 2 gamma S_t) / (1/sigma0^2 + 4 gamma^2 t);
* the exponential update telescopes, so iterating single steps must
  land exactly on the closed form evaluated at the final signal.
"""

import math

import numpy as np
import pytest

from qmonitor.errors import ConfigError
from qmonitor.measure import (
    GridMeasure,
    mean_and_variance,
    to_observable_units,
)
from qmonitor.noise import RngStream, TimeGrid, sample_noise
from qmonitor.qnd import (
    DiscreteChainConfig,
    chain_outcome_batch,
    cheater_signal_batch,
    collapse_width,
    conditional_variance,
    conditional_variance_batch,
    discrete_chain_step,
    filter_replay,
    girsanov_check,
    innovation_batch,
    innovation_path,
    kernel_closed_form,
    observer_batch,
    posterior_closed_form,
    pure_state_kernel,
    qnd_step,
    qnd_step_linear,
    run_discrete_chain,
    simulate_cheater,
    simulate_observer,
)

SEED = 51324
GAMMA = 0.5
PRIOR = GridMeasure.two_atoms(-1.0, 1.0, 0.5)


def test_two_atom_posterior_is_tanh():
    for s in (-1.3, 0.0, 0.4, 2.5):
        post = posterior_closed_form(PRIOR, s, 1.0, GAMMA)
        m, v = mean_and_variance(post)
        assert m == pytest.approx(math.tanh(s), abs=1e-14)
        assert v == pytest.approx(1.0 - math.tanh(s) ** 2, abs=1e-14)


def test_two_atom_posterior_time_invariant_for_unit_atoms():
    # alpha^2 identical across atoms, so the t-dependence cancels
    a = posterior_closed_form(PRIOR, 0.8, 0.5, GAMMA)
    b = posterior_closed_form(PRIOR, 0.8, 7.0, GAMMA)
    np.testing.assert_allclose(a.masses(), b.masses(), rtol=1e-14)


def test_gaussian_posterior_conjugacy():
    m0, sigma0, gamma, t, s = 0.2, 0.6, 0.8, 0.7, 0.9
    mu0 = GridMeasure.gaussian(m0, sigma0, x_min=-6.0, dx=0.005,
                               n_points=2401)
    post = posterior_closed_form(mu0, s, t, gamma)
    prec = 1.0 / sigma0**2 + 4.0 * gamma**2 * t
    mean_ref = (m0 / sigma0**2 + 2.0 * gamma * s) / prec
    m, v = mean_and_variance(post)
    assert m == pytest.approx(mean_ref, abs=1e-8)
    assert v == pytest.approx(1.0 / prec, abs=1e-8)


def test_exponential_step_hits_closed_form_in_one_step():
    dt, dW = 0.05, 0.21
    post, dS = qnd_step(PRIOR, dW, dt, GAMMA)
    ref = posterior_closed_form(PRIOR, dS, dt, GAMMA)
    np.testing.assert_allclose(post.masses(), ref.masses(), rtol=1e-13)


def test_exponential_steps_telescope_along_a_path():
    grid = TimeGrid(dt=0.01, n_steps=200)
    measures, path = simulate_observer(PRIOR, grid, GAMMA,
                                       RngStream(SEED, 0), "exponential",
                                       record_every=50)
    for mu, k in zip(measures, [0, 50, 100, 150, 200]):
        ref = posterior_closed_form(PRIOR, path.S[k], k * grid.dt, GAMMA)
        np.testing.assert_allclose(mu.masses(), ref.masses(), rtol=1e-11)


def test_linear_step_consistent_to_first_order():
    dt = 1e-4
    dW = 0.3 * math.sqrt(dt)
    a, _ = qnd_step(PRIOR, dW, dt, GAMMA)
    b, _ = qnd_step_linear(PRIOR, dW, dt, GAMMA)
    gap = np.max(np.abs(a.masses() - b.masses()))
    a2, _ = qnd_step(PRIOR, dW / 2, dt / 2, GAMMA)
    b2, _ = qnd_step_linear(PRIOR, dW / 2, dt / 2, GAMMA)
    gap2 = np.max(np.abs(a2.masses() - b2.masses()))
    assert gap < 1e-4
    assert gap2 < 0.6 * gap


def test_step_validation():
    with pytest.raises(ConfigError):
        qnd_step(PRIOR, 0.0, -0.1, GAMMA)
    with pytest.raises(ConfigError):
        qnd_step(PRIOR, 0.0, 0.1, 0.0)


def test_cheater_signal_decomposition():
    grid = TimeGrid(dt=0.02, n_steps=50)
    xbar, path = simulate_cheater(PRIOR, grid, GAMMA, RngStream(SEED, 1))
    assert xbar in (-1.0, 1.0)
    brownian = path.S - 2.0 * GAMMA * xbar * grid.times()
    np.testing.assert_allclose(np.diff(brownian), path.dW.increments,
                               rtol=0, atol=1e-12)


def test_cheater_batch_matches_single_paths():
    grid = TimeGrid(dt=0.1, n_steps=9)
    xb, S = cheater_signal_batch(PRIOR, grid, GAMMA, RngStream(SEED, 0), 4,
                                 record_times=None, stream_offset=3)
    for i in range(4):
        xbar, path = simulate_cheater(PRIOR, grid, GAMMA,
                                      RngStream(SEED, 3 + i))
        assert xb[i] == xbar
        np.testing.assert_array_equal(S[i], path.S)


def test_observer_batch_matches_single_paths():
    grid = TimeGrid(dt=0.05, n_steps=20)
    ens = observer_batch(PRIOR, grid, GAMMA, RngStream(SEED, 0), 3,
                         record_times=[0.5, 1.0])
    for i in range(3):
        measures, path = simulate_observer(PRIOR, grid, GAMMA,
                                           RngStream(SEED, i),
                                           record_every=10)
        np.testing.assert_array_equal(ens.S[i], path.S[[10, 20]])
        for j, mu in enumerate(measures[1:]):
            m, v = mean_and_variance(mu)
            assert ens.post_mean[i, j] == pytest.approx(m, abs=1e-14)
            assert ens.post_var[i, j] == pytest.approx(v, abs=1e-14)


def test_filter_replay_reproduces_stepping():
    grid = TimeGrid(dt=0.01, n_steps=60)
    for method in ("exponential", "linear"):
        measures, path = simulate_observer(PRIOR, grid, GAMMA,
                                           RngStream(SEED, 2), method,
                                           record_every=1)
        dS = np.diff(path.S)[None, :]
        masses = filter_replay(PRIOR, dS, grid.dt, GAMMA, method=method)
        for k, mu in enumerate(measures):
            np.testing.assert_allclose(masses[0, k], mu.masses(),
                                       rtol=0, atol=1e-10)


def test_innovation_path_recovers_drift_free_noise():
    grid = TimeGrid(dt=0.01, n_steps=100)
    _, path = simulate_cheater(PRIOR, grid, GAMMA, RngStream(SEED, 3))
    W = innovation_path(path, PRIOR, GAMMA)
    # left-rule recomputation with the tanh posterior mean
    drift = 0.0
    for k in (30, 100):
        ref = path.S[k] - sum(
            2.0 * GAMMA * math.tanh(path.S[j]) * grid.dt for j in range(k))
        assert W[k] == pytest.approx(ref, abs=1e-10)
    batch = innovation_batch(path.S[None, :], grid, PRIOR, GAMMA, [30, 100])
    np.testing.assert_allclose(batch[0], W[[30, 100]], rtol=0, atol=1e-10)


def test_girsanov_constant_functional():
    mu_alpha = to_observable_units(PRIOR, GAMMA)
    res = girsanov_check([("1", lambda a, s: np.ones_like(s))], mu_alpha,
                         t=1.0, n_samples=20000, rng=RngStream(SEED, 4))[0]
    assert res.lhs == pytest.approx(1.0, abs=1e-12)
    assert abs(res.rhs - 1.0) <= 4 * res.rhs_se


def test_conditional_variance_matches_tanh_formula():
    mu_alpha = to_observable_units(PRIOR, GAMMA)
    for s in (-0.7, 0.3, 1.9):
        v = conditional_variance(mu_alpha, s, 1.0)
        assert v == pytest.approx(1.0 - math.tanh(s) ** 2, abs=1e-12)
    batch = conditional_variance_batch(mu_alpha, np.array([-0.7, 0.3]), 1.0)
    assert batch[0] == pytest.approx(1.0 - math.tanh(-0.7) ** 2, abs=1e-12)


def test_collapse_width_is_std():
    assert collapse_width(PRIOR) == pytest.approx(1.0, abs=1e-12)


def test_kernel_diagonal_matches_measure_posterior():
    x = np.linspace(-2.0, 2.0, 81)
    psi = np.exp(-x * x)
    rho = pure_state_kernel(x, psi)
    snap, _ = kernel_closed_form(rho, 0.4, 0.3, GAMMA)
    diag = snap.diagonal_measure()
    mu0 = rho.diagonal_measure()
    ref = posterior_closed_form(mu0, 0.4, 0.3, GAMMA)
    np.testing.assert_allclose(diag.masses(), ref.masses(), rtol=1e-10)


def test_kernel_off_diagonal_damping():
    x = np.linspace(-1.0, 1.0, 21)
    psi = np.ones_like(x)
    rho = pure_state_kernel(x, psi)
    gamma, t = 0.8, 0.5
    snap, _ = kernel_closed_form(rho, 0.0, t, gamma)
    vals = np.abs(snap.values)
    # S=0: |rho_t(x,y)| / |rho_0(x,y)| = exp(-gamma^2 t (x^2 + y^2))
    i, j = 2, 18
    ratio = vals[i, j] / np.abs(rho.values)[i, j]
    ref = math.exp(-gamma**2 * t * (x[i] ** 2 + x[j] ** 2))
    assert ratio == pytest.approx(ref, rel=1e-12)


# -- discrete rounds -------------------------------------------------


def linear_probability(i, alpha):
    p_one = 0.5 * (1.0 + 0.5 * np.asarray(alpha, dtype=float))
    return p_one if i == 1 else 1.0 - p_one


def test_probability_matrix_validation():
    with pytest.raises(ConfigError):
        DiscreteChainConfig(lambda i, a: np.full_like(a, 0.4), 2, PRIOR, 3)

    def dead_outcome(i, alpha):
        return (np.ones_like(alpha) if i == 0
                else np.zeros_like(alpha))

    with pytest.raises(ConfigError):
        DiscreteChainConfig(dead_outcome, 2, PRIOR, 3)


def test_discrete_step_is_bayes_rule():
    cfg = DiscreteChainConfig(linear_probability, 2, PRIOR, 1)
    post, outcome = discrete_chain_step(PRIOR, cfg,
                                        RngStream(SEED, 7).generator())
    # prior (1/2, 1/2); likelihood columns are (0.75, 0.25) for outcome 0
    # and (0.25, 0.75) for outcome 1
    expected = [0.75, 0.25] if outcome == 0 else [0.25, 0.75]
    np.testing.assert_allclose(post.masses(), expected, rtol=1e-12)


def test_run_discrete_chain_concentrates():
    cfg = DiscreteChainConfig(linear_probability, 2, PRIOR, 2000)
    outcomes, mu_end = run_discrete_chain(cfg, RngStream(SEED, 5))
    assert outcomes.shape == (2000,)
    assert max(mu_end.masses()) > 0.99


def test_chain_outcome_batch_first_round_law():
    cfg = DiscreteChainConfig(linear_probability, 2, PRIOR, 2)
    outs = chain_outcome_batch(cfg, 40000, RngStream(SEED, 6))
    # marginal P(outcome 1) = mean of p(1|alpha) over the prior = 1/2
    freq = np.mean(outs[:, 0])
    assert abs(freq - 0.5) < 4 * math.sqrt(0.25 / 40000)
