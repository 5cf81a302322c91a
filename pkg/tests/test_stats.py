"""Statistical verification helpers, checked against scipy and math.fsum."""

import io
import math

import numpy as np
import pytest
import scipy.stats

from qmonitor.errors import ConfigError, NumericalError
from qmonitor.noise import RngStream
from qmonitor.stats import (
    DriftEstimate,
    convergence_order_fit,
    ks_one_sample,
    ks_two_sample,
    martingale_drift,
    mean_and_se,
    mean_fsum,
    run_ensemble,
    variance_fsum,
)

SEED = 90311


def test_fsum_reductions_are_permutation_invariant():
    gen = RngStream(SEED, 0).generator()
    v = np.concatenate([gen.standard_normal(500) * 1e12,
                        gen.standard_normal(500) * 1e-6])
    shuffled = gen.permutation(v)
    assert mean_fsum(v) == mean_fsum(shuffled)
    assert variance_fsum(v) == variance_fsum(shuffled)
    assert mean_fsum(v) == math.fsum(v) / v.size


def test_mean_and_se_against_numpy():
    gen = RngStream(SEED, 1).generator()
    v = gen.standard_normal(400)
    m, se = mean_and_se(v)
    assert m == pytest.approx(np.mean(v), rel=1e-13)
    assert se == pytest.approx(np.std(v, ddof=1) / math.sqrt(v.size),
                               rel=1e-13)
    m1, se1 = mean_and_se([2.5])
    assert m1 == 2.5 and math.isnan(se1)


def test_ks_two_sample_matches_scipy():
    gen = RngStream(SEED, 2).generator()
    a = gen.standard_normal(700)
    b = gen.standard_normal(1100) * 1.1
    res = ks_two_sample(a, b)
    ref = scipy.stats.ks_2samp(a, b)
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    n, m = 700, 1100
    assert res.critical == pytest.approx(
        1.628 * math.sqrt((n + m) / (n * m)), rel=1e-12)
    assert res.n == n and res.m == m


def test_ks_two_sample_pass_flag_tracks_critical():
    gen = RngStream(SEED, 3).generator()
    a = gen.standard_normal(2000)
    same = ks_two_sample(a, gen.standard_normal(2000))
    shifted = ks_two_sample(a, gen.standard_normal(2000) + 2.0)
    assert same.passed
    assert not shifted.passed


def test_ks_two_sample_validation():
    gen = RngStream(SEED, 4).generator()
    with pytest.raises(ConfigError, match="100"):
        ks_two_sample(gen.standard_normal(50), gen.standard_normal(500))
    bad = gen.standard_normal(200)
    bad[7] = np.nan
    with pytest.raises(ConfigError, match="finite"):
        ks_two_sample(bad, gen.standard_normal(200))


def test_ks_one_sample_matches_scipy():
    gen = RngStream(SEED, 5).generator()
    s = gen.standard_normal(900)
    res = ks_one_sample(s, scipy.stats.norm.cdf)
    ref = scipy.stats.kstest(s, "norm")
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert res.critical == pytest.approx(1.628 / math.sqrt(900), rel=1e-12)
    assert res.passed


def test_ks_one_sample_rejects_bad_cdf():
    gen = RngStream(SEED, 6).generator()
    with pytest.raises(ConfigError, match=r"\[0, 1\]"):
        ks_one_sample(gen.standard_normal(200), lambda x: 2.0 * x)


def test_martingale_drift_brownian_is_centered():
    gen = RngStream(SEED, 7).generator()
    n_paths, n_steps, dt = 4000, 200, 0.01
    inc = gen.standard_normal((n_paths, n_steps)) * math.sqrt(dt)
    paths = np.concatenate(
        [np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)
    times = dt * np.arange(n_steps + 1)
    est = martingale_drift(times, paths, [(0.0, 1.0), (0.5, 2.0)])
    for e in est:
        assert isinstance(e, DriftEstimate)
        assert abs(e.z_score) < 4.0
        # SE of a Brownian increment over (s, t) is sqrt((t-s)/n)
        assert e.std_err == pytest.approx(
            math.sqrt((e.t - e.s) / n_paths), rel=0.1)


def test_martingale_drift_flags_linear_growth():
    gen = RngStream(SEED, 8).generator()
    n_paths = 2000
    rates = 1.0 + 0.1 * gen.standard_normal(n_paths)
    times = np.linspace(0.0, 2.0, 21)
    paths = rates[:, None] * times[None, :]
    (est,) = martingale_drift(times, paths, [(0.0, 2.0)])
    assert est.drift == pytest.approx(2.0 * np.mean(rates), rel=1e-12)
    assert abs(est.z_score) > 10.0


def test_martingale_drift_validation():
    times = np.linspace(0.0, 1.0, 11)
    paths = np.zeros((4, 11))
    with pytest.raises(ConfigError, match="s < t"):
        martingale_drift(times, paths, [(0.5, 0.5)])
    with pytest.raises(ConfigError, match="one recorded time"):
        martingale_drift(times, paths, [(0.501, 0.502)])
    with pytest.raises(ConfigError, match="n_paths"):
        martingale_drift(times, np.zeros((4, 7)), [(0.0, 1.0)])


def test_order_fit_recovers_exact_power_law():
    dts = np.array([0.1, 0.05, 0.025, 0.0125])
    fit = convergence_order_fit(dts, 3.7 * dts**1.5)
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.7), abs=1e-10)
    assert fit.residual_rms < 1e-12
    assert fit.ci_low == pytest.approx(fit.ci_high, abs=1e-9)
    assert "order 1.500" in str(fit)


def test_order_fit_ci_covers_noisy_slope():
    gen = RngStream(SEED, 9).generator()
    dts = np.geomspace(1e-3, 1e-1, 8)
    errors = 0.8 * dts**2 * np.exp(0.05 * gen.standard_normal(8))
    fit = convergence_order_fit(dts, errors)
    assert fit.ci_low < 2.0 < fit.ci_high


def test_order_fit_validation():
    with pytest.raises(ConfigError, match="three"):
        convergence_order_fit([0.1, 0.05], [1.0, 0.5])
    with pytest.raises(ConfigError, match="distinct"):
        convergence_order_fit([0.1, 0.1, 0.05], [1.0, 1.0, 0.5])
    with pytest.raises(ConfigError, match="exact"):
        convergence_order_fit([0.1, 0.05, 0.025], [1.0, 0.5, 0.0])


def _terminal_noise(rng: RngStream) -> float:
    return float(rng.generator().standard_normal(16)[-1])


def test_run_ensemble_thread_count_does_not_change_results():
    serial = run_ensemble(_terminal_noise, RngStream(SEED, 0), 64, threads=1)
    threaded = run_ensemble(_terminal_noise, RngStream(SEED, 0), 64, threads=4)
    np.testing.assert_array_equal(serial.values, threaded.values)
    assert serial.mean == threaded.mean
    assert serial.std_err == threaded.std_err
    assert serial.mean == pytest.approx(
        math.fsum(serial.values) / 64, rel=1e-15)


def test_run_ensemble_records_numerical_failures_as_nan():
    def task(rng: RngStream) -> float:
        u = rng.generator().random()
        if u < 0.3:  # deterministic per stream
            raise NumericalError(f"diverged at u={u:.3f}")
        return u

    report = run_ensemble(task, RngStream(SEED, 0), 50)
    assert report.n_failed > 0
    for i, msg in report.failures:
        assert math.isnan(report.values[i])
        assert "diverged" in msg
    good = report.values[np.isfinite(report.values)]
    assert report.mean == pytest.approx(np.mean(good), rel=1e-13)
    assert not report.valid  # far more than 1% failed


def test_run_ensemble_propagates_config_errors():
    def task(rng: RngStream) -> float:
        raise ConfigError("bad setup")

    with pytest.raises(ConfigError, match="bad setup"):
        run_ensemble(task, RngStream(SEED, 0), 8)
    with pytest.raises(ConfigError):
        run_ensemble(_terminal_noise, RngStream(SEED, 0), 0)


def test_ensemble_report_serialization():
    report = run_ensemble(_terminal_noise, RngStream(SEED, 0), 8)
    d = report.to_dict()
    assert d["n_paths"] == 8 and d["valid"] and d["n_failed"] == 0
    buf = io.StringIO()
    report.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[2] == "path_index,value"
    assert len(lines) == 3 + 8
    first = float(lines[3].split(",")[1])
    assert first == report.values[0]
