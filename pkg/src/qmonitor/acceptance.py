"""Acceptance suite: one function per shipped verification criterion.

Each criterion is a self-contained experiment with hard-coded physical
parameters, seeded from a single integer.  Stochastic criteria assert
inside 3-standard-error bands (4 SE where several bands stack), and a
failed criterion is retried once on a shifted seed and flagged; a
second failure is final.  Every criterion also emits small CSV
artifacts whose bytes depend only on the seed, which is what makes
re-runs from a manifest reproducible.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import QmonitorError
from .measure import (
    GridMeasure,
    log_sum_exp,
    register_test_function,
    sample_nodes,
    to_observable_units,
)
from .noise import RngStream, TimeGrid, sample_noise
from .qnd import (
    DiscreteChainConfig,
    chain_outcome_batch,
    cheater_signal_batch,
    conditional_variance_batch,
    filter_replay,
    girsanov_check,
    innovation_batch,
    observer_batch,
    run_discrete_chain,
)
from .lindblad import (
    LindbladSpec,
    MonitoredDiffusionConfig,
    SweepReport,
    SweepRow,
    diffusion_batch,
    separated_kernel_residual,
    strong_limit_sweep,
)
from .packet import (
    PhysicalScales,
    Potential,
    a_drift,
    a_infinity,
    double_scaling_study,
    langevin_batch,
    langevin_harmonic_exact,
    simulate_langevin,
    variance_closed_form,
)
from .stats import (
    convergence_order_fit,
    ks_two_sample,
    mean_and_se,
    mean_fsum,
    variance_fsum,
)

__all__ = [
    "DEFAULT_SEED",
    "CriterionResult",
    "CRITERIA",
    "run_criterion",
    "run_suite",
    "suite_table",
    "acceptance_csv",
]

DEFAULT_SEED = 20260814
RETRY_SEED_SHIFT = 1000003

# stream-id blocks so one criterion's auxiliary draws never collide
# with its path streams (paths use 0..n_paths-1)
_AUX = 1 << 40


def _subseed(seed: int, tag: int) -> int:
    return (seed + tag * 0x9E3779B97F4A7C15) % (1 << 64)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _csv_text(comments: Sequence[str], columns: Sequence[str],
              rows: Sequence[Sequence]) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _two_atom_prior() -> GridMeasure:
    return GridMeasure.two_atoms(-1.0, 1.0, 0.5)


# ---------------------------------------------------------------------------
# A1: step-by-step filtering vs the closed-form posterior on one signal


def _closed_form_masses(mu0: GridMeasure, S_nodes: np.ndarray,
                        t_nodes: np.ndarray, gamma: float) -> np.ndarray:
    """Node masses of the closed-form posterior, shape (..., n_points)."""
    alpha = 2.0 * gamma * mu0.x
    logits = (mu0.log_weights
              + alpha * S_nodes[..., None]
              - 0.5 * alpha * alpha * t_nodes[..., None])
    logits = logits - log_sum_exp(logits, axis=-1)[..., None]
    return np.exp(logits)


def _a1(seed: int):
    gamma = 0.5
    t_final = 1.0
    n_coarse = 10000
    n_fine = 2 * n_coarse
    n_rep = 16
    mu0 = _two_atom_prior()
    dt_f = t_final / n_fine
    # cheater-frame signals on a common refinement so halving the step
    # reuses the same underlying path
    dS_fine = np.empty((n_rep, n_fine))
    root = np.sqrt(dt_f)
    for i in range(n_rep):
        gen = RngStream(seed, i).generator()
        xb = float(sample_nodes(mu0, gen))
        dW = gen.standard_normal(n_fine) * root
        dS_fine[i] = 2.0 * gamma * xb * dt_f + dW
    dS_coarse = dS_fine.reshape(n_rep, n_coarse, 2).sum(axis=2)
    sups = {}
    for tag, dS, n in (("dt", dS_coarse, n_coarse), ("dt/2", dS_fine, n_fine)):
        dt = t_final / n
        t_nodes = dt * np.arange(n + 1)
        S_nodes = np.concatenate(
            [np.zeros((n_rep, 1)), np.cumsum(dS, axis=1)], axis=1)
        ref = _closed_form_masses(mu0, S_nodes, t_nodes, gamma)
        for method in ("linear", "exponential"):
            masses = filter_replay(mu0, dS, dt, gamma, method=method)
            sups[(tag, method)] = np.max(np.abs(masses - ref), axis=(1, 2))
    mean_lin = float(np.mean(sups[("dt", "linear")]))
    mean_lin_half = float(np.mean(sups[("dt/2", "linear")]))
    max_exp = float(np.max(sups[("dt", "exponential")]))
    tol = 5e-3
    ok = (mean_lin <= tol) and (mean_lin_half < mean_lin) and (max_exp <= tol)
    details = (f"linear sup error {mean_lin:.3g} (tol {tol:g}), "
               f"halved step {mean_lin_half:.3g}, "
               f"exponential sup error {max_exp:.3g}")
    rows = []
    for tag, n in (("dt", n_coarse), ("dt/2", n_fine)):
        for method in ("linear", "exponential"):
            s = sups[(tag, method)]
            rows.append((method, t_final / n, float(np.mean(s)),
                         float(np.max(s))))
    art = _csv_text(
        ["filtering-vs-closed-form sup node-mass errors, "
         f"{n_rep} signal paths, gamma={gamma}, t in [0,{t_final:g}]"],
        ["method", "dt", "mean_sup_error", "max_sup_error"], rows)
    return ok, details, {"a1_posterior_convergence.csv": art}


# ---------------------------------------------------------------------------
# A2: cheater and observer signal laws agree


def _a2(seed: int):
    gamma = 0.5
    n = 10000
    mu0 = _two_atom_prior()
    grid_obs = TimeGrid(dt=1e-3, n_steps=1000)
    ens = observer_batch(mu0, grid_obs, gamma, RngStream(seed, 0), n,
                         record_times=[1.0])
    s_observer = ens.S[:, -1]
    grid_cheat = TimeGrid(dt=1.0, n_steps=1)
    _, s_cheat = cheater_signal_batch(mu0, grid_cheat, gamma,
                                      RngStream(_subseed(seed, 1), 0), n,
                                      record_times=[1.0])
    ks = ks_two_sample(s_observer, s_cheat[:, -1])
    ok = ks.passed
    details = (f"KS statistic {ks.statistic:.4g} vs 1% critical "
               f"{ks.critical:.4g} (n=m={n})")
    art = _csv_text(
        ["two-sample KS between observer and cheater signal laws at t=1"],
        ["statistic", "critical", "n", "m",
         "observer_mean", "observer_var", "cheater_mean", "cheater_var"],
        [(ks.statistic, ks.critical, ks.n, ks.m,
          mean_fsum(s_observer), variance_fsum(s_observer),
          mean_fsum(s_cheat[:, -1]), variance_fsum(s_cheat[:, -1]))])
    return ok, details, {"a2_signal_law.csv": art}


# ---------------------------------------------------------------------------
# A3: change of measure between driftless and cheater signal laws


def _a3(seed: int):
    mu_alpha = to_observable_units(_two_atom_prior(), 0.5)
    res = girsanov_check([("A*S", lambda a, s: a * s)], mu_alpha, t=1.0,
                         n_samples=100000, rng=RngStream(seed, _AUX + 3))[0]
    target = 1.0
    cross_se = float(np.hypot(res.lhs_se, res.rhs_se))
    ok = (abs(res.lhs - target) <= 3 * res.lhs_se
          and abs(res.rhs - target) <= 3 * res.rhs_se
          and abs(res.lhs - res.rhs) <= 3 * cross_se)
    details = (f"direct {res.lhs:.4f} (SE {res.lhs_se:.4f}), "
               f"reweighted {res.rhs:.4f} (SE {res.rhs_se:.4f}), target 1")
    art = _csv_text(
        ["E[A S_t] at t=1 under the two constructions, exact value 1"],
        ["functional", "direct", "direct_se", "reweighted", "reweighted_se",
         "reference"],
        [(res.label, res.lhs, res.lhs_se, res.rhs, res.rhs_se, target)])
    return ok, details, {"a3_change_of_measure.csv": art}


# ---------------------------------------------------------------------------
# A4: the innovation process is a Brownian motion


def _a4(seed: int):
    gamma = 0.5
    mu0 = _two_atom_prior()
    n_paths = 10000
    chunk = 1000
    grid = TimeGrid(dt=2.5e-4, n_steps=4000)
    half, end = 2000, 4000
    W = np.empty((n_paths, 2))
    for c in range(0, n_paths, chunk):
        _, S = cheater_signal_batch(mu0, grid, gamma, RngStream(seed, 0),
                                    chunk, record_times=None,
                                    stream_offset=c)
        W[c:c + chunk] = innovation_batch(S, grid, mu0, gamma, [half, end])
    w_end = W[:, 1]
    mean, mean_se = mean_and_se(w_end)
    var = variance_fsum(w_end)
    var_se = var * np.sqrt(2.0 / (n_paths - 1))
    d1 = W[:, 0]
    d2 = W[:, 1] - W[:, 0]
    corr = float(np.corrcoef(d1, d2)[0, 1])
    corr_se = 1.0 / np.sqrt(n_paths)
    t_end = 1.0
    ok = (abs(mean) <= 3 * mean_se
          and abs(var - t_end) <= 3 * var_se
          and abs(corr) <= 3 * corr_se)
    details = (f"mean {mean:.4g} (SE {mean_se:.4g}), "
               f"var {var:.4f} vs {t_end} (SE {var_se:.4f}), "
               f"disjoint-increment corr {corr:.4g} (SE {corr_se:.4g})")
    art = _csv_text(
        [f"innovation-process statistics over {n_paths} cheater paths, t=1"],
        ["check", "estimate", "std_err", "reference"],
        [("mean", mean, mean_se, 0.0),
         ("variance", var, var_se, t_end),
         ("disjoint_corr", corr, corr_se, 0.0)])
    return ok, details, {"a4_innovation.csv": art}


# ---------------------------------------------------------------------------
# A5: posterior variance decays


def _a5(seed: int):
    gamma = 0.5
    mu0 = _two_atom_prior()
    mu_alpha = to_observable_units(mu0, gamma)
    n = 20000
    means = []
    ses = []
    ts = (1.0, 4.0, 16.0)
    for j, t in enumerate(ts):
        grid = TimeGrid(dt=float(t), n_steps=1)
        _, S = cheater_signal_batch(mu0, grid, gamma,
                                    RngStream(_subseed(seed, j), 0), n,
                                    record_times=[t])
        v = conditional_variance_batch(mu_alpha, S[:, -1], float(t))
        m, se = mean_and_se(v)
        means.append(m)
        ses.append(se)
    ok = (means[0] > means[1] > means[2]) and means[2] < 1e-3
    details = ("mean posterior variance "
               + " > ".join(f"{m:.3g}" for m in means)
               + f" at t={ts}; final < 1e-3: {means[2] < 1e-3}")
    art = _csv_text(
        [f"ensemble mean of the posterior variance, {n} cheater paths"],
        ["t", "mean_posterior_variance", "std_err"],
        list(zip(ts, means, ses)))
    return ok, details, {"a5_variance_decay.csv": art}


# ---------------------------------------------------------------------------
# A6: discrete chain exchangeability and limiting frequencies


def _chain_probability(i: int, alpha: np.ndarray) -> np.ndarray:
    p_one = 0.5 * (1.0 + 0.5 * np.asarray(alpha, dtype=float))
    return p_one if i == 1 else 1.0 - p_one


def _a6(seed: int):
    mu0 = _two_atom_prior()
    n_runs = 100000
    cfg3 = DiscreteChainConfig(_chain_probability, 2, mu0, 3)
    outs = chain_outcome_batch(cfg3, n_runs, RngStream(seed, _AUX + 6))
    patterns = [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
    freqs = []
    for pat in patterns:
        hit = np.all(outs == np.asarray(pat), axis=1)
        freqs.append(float(np.mean(hit)))
    pair_ok = []
    for a in range(3):
        for b in range(a + 1, 3):
            diff = freqs[a] - freqs[b]
            se = np.sqrt((freqs[a] + freqs[b] - diff * diff) / n_runs)
            pair_ok.append(abs(diff) <= 3 * se)
    n_rounds = 10000
    cfgN = DiscreteChainConfig(_chain_probability, 2, mu0, n_rounds)
    outcomes, mu_end = run_discrete_chain(cfgN, RngStream(seed, _AUX + 7))
    alpha_hat = float(mu_end.x[int(np.argmax(mu_end.masses()))])
    p_hat = float(_chain_probability(1, np.asarray([alpha_hat]))[0])
    freq = float(np.mean(outcomes == 1))
    band = 3 * np.sqrt(p_hat * (1 - p_hat) / n_rounds)
    freq_ok = abs(freq - p_hat) <= band
    ok = all(pair_ok) and freq_ok
    details = (f"single-one sequence freqs {freqs[0]:.4f}/{freqs[1]:.4f}/"
               f"{freqs[2]:.4f} (exchangeable: {all(pair_ok)}); "
               f"long-run freq {freq:.4f} vs p(1|{alpha_hat:g}) = {p_hat}"
               f" +- {band:.4f}")
    art = _csv_text(
        [f"exchangeability over {n_runs} 3-round chains and "
         f"frequency convergence over one {n_rounds}-round chain"],
        ["check", "value", "reference", "band_3se"],
        [("P(0,0,1)", freqs[0], sum(freqs) / 3, ""),
         ("P(0,1,0)", freqs[1], sum(freqs) / 3, ""),
         ("P(1,0,0)", freqs[2], sum(freqs) / 3, ""),
         ("long_run_freq", freq, p_hat, band)])
    return ok, details, {"a6_chain.csv": art}


# ---------------------------------------------------------------------------
# A7: strong-measurement limit of the monitored heat flow


def _a7(seed: int):
    D = 1.0
    t_final = 0.5
    mu0 = GridMeasure.gaussian(0.0, 0.5, x_min=-6.0, dx=0.024, n_points=501)
    grid = TimeGrid(dt=2.5e-4, n_steps=2000)
    gammas = (2.0, 5.0, 10.0)
    n_paths = 512
    phi_x = register_test_function(lambda x: x, "x", mu0)
    phi_x2 = register_test_function(lambda x: x * x, "x^2", mu0)
    m2_ref = 0.25 + D * t_final
    refs = {
        "E[mu[x]]": 0.0,
        "E[mu[x]^2]": m2_ref,
        "E[mu[x^2]]": m2_ref,
        "E[mu[x^2]^2]": 3.0 * m2_ref * m2_ref,
    }
    sweep = strong_limit_sweep(mu0, grid, gammas, [phi_x, phi_x2],
                               RngStream(seed, 0), n_paths, D=D,
                               references=refs)

    def series(label):
        rows = sorted(sweep.by_observable(label), key=lambda r: r.gamma)
        return rows

    m2 = series("E[mu[x^2]]")
    sq = series("E[mu[x]^2]")
    px = series("proxy[x]")
    martingale_ok = all(abs(r.estimate - m2_ref) <= 4 * r.std_err for r in m2)
    sq_err = [r.abs_error for r in sq]
    conc_ok = sq_err[0] > sq_err[1] > sq_err[2]
    pvals = [r.estimate for r in px]
    proxy_ok = (pvals[0] > pvals[1] > pvals[2]
                and pvals[2] < 0.25 * pvals[0])
    ok = martingale_ok and conc_ok and proxy_ok
    details = (f"second moment within 4 SE of {m2_ref} at all gamma: "
               f"{martingale_ok}; |E[mu[x]]^2 gap| "
               + " > ".join(f"{e:.3g}" for e in sq_err)
               + "; concentration proxy "
               + " > ".join(f"{p:.3g}" for p in pvals)
               + f", final/initial {pvals[2] / pvals[0]:.3f} < 0.25")
    buf = io.StringIO()
    sweep.to_csv(buf)
    return ok, details, {"a7_strong_limit.csv": buf.getvalue()}


# ---------------------------------------------------------------------------
# A8: monitored general dissipation against its limiting classical SDE


def _a8(seed: int):
    spec = LindbladSpec(U=lambda x: -x,
                        V=lambda x: np.ones_like(x),
                        dU=lambda x: -np.ones_like(x),
                        dV=lambda x: np.zeros_like(x),
                        ddV=lambda x: np.zeros_like(x))
    x0 = 1.0
    t_final = 1.0
    mu0 = GridMeasure.point_mass(x0, x_min=-6.0, dx=0.04, n_points=301)
    grid = TimeGrid(dt=5e-4, n_steps=2000)
    gammas = (2.0, 5.0, 10.0)
    n_paths = 2048
    mean_ref = x0 * np.exp(-t_final)
    var_ref = 0.5 * (1.0 - np.exp(-2.0 * t_final))
    rows = []
    mean_ok, corr_ok = True, True
    raw_gaps = []
    final_mean_err = None
    for g in gammas:
        cfg = MonitoredDiffusionConfig(gamma=g, mu0=mu0, grid=grid,
                                       rng=RngStream(seed, 0), spec=spec)
        ens = diffusion_batch(cfg, n_paths, RngStream(seed, 0),
                              record_times=[t_final])
        if ens.failed:
            return False, f"{len(ens.failed)} paths died at gamma={g}", {}
        m = ens.post_mean[:, -1]
        v = ens.post_var[:, -1]
        mean_est, mean_se = mean_and_se(m)
        spread = variance_fsum(m)
        spread_se = spread * np.sqrt(2.0 / (n_paths - 1))
        v_mean, v_se = mean_and_se(v)
        corrected = spread + v_mean
        corrected_se = float(np.hypot(spread_se, v_se))
        mean_ok &= abs(mean_est - mean_ref) <= 4 * mean_se
        corr_ok &= abs(corrected - var_ref) <= 4 * corrected_se
        raw_gaps.append(abs(spread - var_ref))
        final_mean_err = abs(mean_est - mean_ref) / abs(mean_ref)
        rows.append(SweepRow(g, "E[mu[x]]", mean_est, mean_se, mean_ref,
                             abs(mean_est - mean_ref)))
        rows.append(SweepRow(g, "ens_var[mu[x]]", spread, spread_se, var_ref,
                             abs(spread - var_ref)))
        rows.append(SweepRow(g, "corrected_spread", corrected, corrected_se,
                             var_ref, abs(corrected - var_ref)))
    gaps_ok = raw_gaps[0] > raw_gaps[1] > raw_gaps[2]
    final_ok = final_mean_err <= 0.10
    ok = mean_ok and corr_ok and gaps_ok and final_ok
    details = (f"mean within 4 SE of {mean_ref:.4f} at all gamma: {mean_ok}; "
               "spread gap " + " > ".join(f"{gp:.3g}" for gp in raw_gaps)
               + f"; corrected spread matches {var_ref:.4f}: {corr_ok}; "
               f"final relative mean error {final_mean_err:.3g} <= 0.1")
    report = SweepReport(t_final, n_paths, rows)
    buf = io.StringIO()
    report.to_csv(buf)
    return ok, details, {"a8_lindblad_limit.csv": buf.getvalue()}


# ---------------------------------------------------------------------------
# A9: separated two-point solution satisfies the kernel equation


def _a9(seed: int):
    mu0 = GridMeasure.gaussian(0.0, 0.5, x_min=-4.0, dx=0.05, n_points=161)
    sigma0 = lambda u: np.exp(-0.5 * u * u + 0.3j * u)
    D = 0.5
    gamma = 1.0
    t_final = 0.2
    dts = [1e-3, 5e-4, 2.5e-4]
    seeds = 3
    means = []
    for dt in dts:
        n = int(round(t_final / dt))
        vals = []
        for s in range(seeds):
            cfg = MonitoredDiffusionConfig(gamma=gamma, mu0=mu0,
                                           grid=TimeGrid(dt=dt, n_steps=n),
                                           rng=RngStream(seed, _AUX + 9 + s),
                                           D=D)
            vals.append(separated_kernel_residual(sigma0, cfg))
        means.append(float(np.mean(vals)))
    fit = convergence_order_fit(dts, means)
    decay_ok = means[0] > means[1] > means[2]
    slope_ok = 0.7 <= fit.slope <= 1.5
    ok = decay_ok and slope_ok
    details = ("mean per-step defect "
               + " > ".join(f"{m:.3g}" for m in means)
               + f"; fitted order {fit.slope:.2f} "
               f"(CI [{fit.ci_low:.2f}, {fit.ci_high:.2f}]) in [0.7, 1.5]")
    art = _csv_text(
        ["separated-kernel residual vs step size "
         f"(D={D}, gamma={gamma}, horizon {t_final}, {seeds} paths each); "
         f"fitted order {fit.slope:.17g}"],
        ["dt", "mean_step_defect"],
        list(zip(dts, means)))
    return ok, details, {"a9_kernel_residual.csv": art}


# ---------------------------------------------------------------------------
# A10: width-flow fixed point


def _a10(seed: int):
    del seed  # deterministic
    rows = []
    ok = True
    for omega, ell in ((1.0, 1.0), (2.3, 0.7)):
        scales = PhysicalScales.from_omega_ell(omega, ell)
        for Om in (0.0, omega / 10.0):
            ddv = scales.mass * Om * Om
            a_inf = a_infinity(scales, ddv)
            resid = abs(a_drift(a_inf, scales, ddv))
            ok &= resid <= 1e-12
            rows.append((omega, ell, Om, a_inf.real, a_inf.imag, resid))
        a_free = a_infinity(scales, 0.0)
        closed = (0.5 - 0.5j) / (ell * ell)
        ok &= abs(a_free - closed) <= 1e-12
    details = (f"max drift residual {max(r[5] for r in rows):.3g} <= 1e-12; "
               "free-space fixed point matches (1-i)/(2 ell^2)")
    art = _csv_text(
        ["width-flow fixed points and drift residuals"],
        ["omega", "ell", "Omega", "re_a_inf", "im_a_inf", "drift_residual"],
        rows)
    return ok, details, {"a10_fixed_point.csv": art}


# ---------------------------------------------------------------------------
# A11: Langevin variance law


def _a11(seed: int):
    Omega, eps = 1.0, 1.0
    potential = Potential.harmonic(Omega)
    grid = TimeGrid(dt=1e-3, n_steps=10000)
    eval_times = [0.1, 1.0, float(np.pi), 10.0]
    n_paths = 10000
    chunk = 1000
    ks = sorted({grid.index_at(t) for t in eval_times})
    snapped = [k * grid.dt for k in ks]
    xs = np.empty((n_paths, len(ks)))
    for c in range(0, n_paths, chunk):
        _, x, _ = langevin_batch(0.0, 0.0, potential, eps, grid,
                                 RngStream(seed, 0), chunk,
                                 record_times=snapped, stream_offset=c)
        xs[c:c + chunk] = x
    rows = []
    ok = True
    for j, t in enumerate(snapped):
        var = variance_fsum(xs[:, j])
        se = var * np.sqrt(2.0 / (n_paths - 1))
        ref = float(variance_closed_form(t, Omega, eps))
        ok &= abs(var - ref) <= 3 * se
        rows.append((t, var, se, ref))
    t_small = 0.01 / Omega
    r_small = float(variance_closed_form(t_small, Omega, eps)
                    / (eps * t_small**3 / 3.0))
    t_large = 100.0 / Omega
    r_large = float(variance_closed_form(t_large, Omega, eps)
                    / (eps * t_large / (2.0 * Omega**2)))
    asym_ok = abs(r_small - 1.0) <= 1e-3 and abs(r_large - 1.0) <= 1e-2
    ok = ok and asym_ok
    details = ("sample variance within 3 SE of the closed form at t="
               + "/".join(f"{t:g}" for t in snapped)
               + f"; small-time ratio {r_small:.6f} (tol 1e-3), "
               f"large-time ratio {r_large:.4f} (tol 1e-2)")
    art = _csv_text(
        [f"harmonic Langevin sample variance, {n_paths} paths, "
         f"Omega={Omega}, eps={eps}, started at rest",
         f"asymptotic ratios: small-time {r_small:.17g}, "
         f"large-time {r_large:.17g}"],
        ["t", "sample_var", "std_err", "closed_form"],
        rows)
    return ok, details, {"a11_variance_law.csv": art}


# ---------------------------------------------------------------------------
# A12: Euler vs exact harmonic response, strong order


def _a12(seed: int):
    Omega, eps = 1.0, 1.0
    x0, v0 = 1.0, 0.0
    potential = Potential.harmonic(Omega)
    t_end = 2.0 * np.pi
    reps = 4
    dts = []
    mean_sups = []
    max_fine = 0.0
    for n in (628, 6283, 62832):
        grid = TimeGrid(dt=t_end / n, n_steps=n)
        sups = []
        for rep in range(reps):
            rng = RngStream(seed, rep)
            noise = sample_noise(grid, rng)
            _, x_euler, _ = simulate_langevin(x0, v0, potential, eps, grid,
                                              rng)
            _, x_exact, _ = langevin_harmonic_exact(x0, v0, Omega, eps, noise)
            sups.append(float(np.max(np.abs(x_euler - x_exact))))
        dts.append(grid.dt)
        mean_sups.append(float(np.mean(sups)))
        if n == 62832:
            max_fine = float(np.max(sups))
    fit = convergence_order_fit(dts, mean_sups)
    ok = max_fine <= 1e-2 and fit.slope >= 0.5
    details = (f"sup error at dt=1e-4: {max_fine:.3g} <= 1e-2; "
               f"strong order {fit.slope:.2f} "
               f"(CI [{fit.ci_low:.2f}, {fit.ci_high:.2f}]) >= 0.5")
    art = _csv_text(
        [f"matched-noise Euler vs exact harmonic response over [0, 2 pi], "
         f"{reps} paths per step size; fitted order {fit.slope:.17g}"],
        ["dt", "mean_sup_error"],
        list(zip(dts, mean_sups)))
    return ok, details, {"a12_strong_order.csv": art}


# ---------------------------------------------------------------------------
# A13: packet dynamics approaches the Langevin law in the double-scaling
# limit


def _a13(seed: int):
    report = double_scaling_study((10.0, 30.0, 100.0), RngStream(seed, 0))
    ks = [r.ks_stat for r in report.rows]
    ok = ks[0] > ks[1] > ks[2]
    details = ("KS distance to the Langevin endpoint law "
               + " > ".join(f"{k:.4f}" for k in ks)
               + " over omega in {10, 30, 100}; variance excess "
               + "/".join(f"{r.var_excess:.3f}" for r in report.rows))
    buf = io.StringIO()
    report.to_csv(buf)
    return ok, details, {"a13_double_scaling.csv": buf.getvalue()}


# ---------------------------------------------------------------------------
# A14: manifest-driven determinism


def _a14(seed: int):
    import hashlib
    import json
    import shutil
    import tempfile
    from contextlib import redirect_stdout
    from pathlib import Path

    from . import cli

    def run_into(outdir: Path, run_seed: int) -> dict:
        cfg = outdir.parent / f"{outdir.name}.ini"
        cfg.write_text(
            "[experiment]\n"
            "kind = langevin\n"
            f"seed = {run_seed}\n"
            "n_paths = 4\n"
            f"output = {outdir}\n"
            "\n"
            "[params]\n"
            "Omega = 1.0\n"
            "eps = 1.0\n"
            "x0 = 2.0\n"
            "v0 = 0.0\n"
            "dt = 0.01\n"
            "t_final = 2.0\n"
            "record_every = 10\n"
        )
        with redirect_stdout(io.StringIO()):
            code = cli.main(["run", "--config", str(cfg)])
        if code != 0:
            raise QmonitorError(f"setup run exited with {code}")
        manifest = json.loads((outdir / "manifest.json").read_text())
        return manifest

    def hashes(outdir: Path, manifest: dict) -> dict:
        out = {}
        for name in manifest["outputs"]:
            out[name] = hashlib.sha256(
                (outdir / name).read_bytes()).hexdigest()
        return out

    base = Path(tempfile.mkdtemp(prefix="qmonitor-a14-"))
    try:
        run_seed = _subseed(seed, 14) % (1 << 32)
        d1, d2 = base / "run1", base / "run2"
        man1 = run_into(d1, run_seed)
        man2 = run_into(d2, run_seed)
        h1, h2 = hashes(d1, man1), hashes(d2, man2)
        identical = h1 == h2 and h1 == man1["outputs"]
        buf = io.StringIO()
        with redirect_stdout(buf):
            rerun_ok = cli.main(["rerun", str(d1)]) == 0
        tampered = json.loads((d1 / "manifest.json").read_text())
        tampered["config"]["experiment"]["seed"] = str(run_seed + 1)
        (d1 / "manifest.json").write_text(json.dumps(tampered, indent=2,
                                                     sort_keys=True))
        buf2 = io.StringIO()
        with redirect_stdout(buf2):
            tamper_code = cli.main(["rerun", str(d1)])
        tamper_detected = (tamper_code != 0
                           and "mismatch" in buf2.getvalue().lower())
        ok = identical and rerun_ok and tamper_detected
        details = (f"independent runs byte-identical: {identical}; "
                   f"manifest re-run verified: {rerun_ok}; "
                   f"tampered seed detected: {tamper_detected}")
        rows = [(name, h1[name] == h2.get(name), h1[name])
                for name in sorted(h1)]
        art = _csv_text(
            ["sha256 comparison of repeated langevin runs from one config"],
            ["output", "identical", "sha256"], rows)
        return ok, details, {"a14_determinism.csv": art}
    finally:
        shutil.rmtree(base, ignore_errors=True)


# ---------------------------------------------------------------------------
# suite plumbing


@dataclass(frozen=True)
class CriterionResult:
    name: str
    title: str
    passed: bool
    retried: bool
    details: str
    runtime_s: float
    artifacts: dict


CRITERIA = {
    "A1": ("posterior oracle equivalence", _a1),
    "A2": ("signal law equivalence (cheater vs observer)", _a2),
    "A3": ("signal change of measure", _a3),
    "A4": ("innovation process is Brownian", _a4),
    "A5": ("conditional-variance decay", _a5),
    "A6": ("discrete chain exchangeability and frequencies", _a6),
    "A7": ("strong-measurement diffusion limit", _a7),
    "A8": ("general dissipation to classical SDE", _a8),
    "A9": ("separated kernel residual", _a9),
    "A10": ("width-flow fixed point", _a10),
    "A11": ("Langevin variance law", _a11),
    "A12": ("Euler vs exact harmonic response", _a12),
    "A13": ("double-scaling convergence", _a13),
    "A14": ("manifest determinism", _a14),
}


def run_criterion(name: str, seed: int = DEFAULT_SEED) -> CriterionResult:
    """Run one criterion with the retry-once policy."""
    if name not in CRITERIA:
        raise QmonitorError(f"unknown criterion {name!r}; "
                            f"choose from {', '.join(CRITERIA)}")
    title, fn = CRITERIA[name]
    start = time.perf_counter()

    def attempt(s):
        try:
            return fn(s)
        except QmonitorError as exc:
            return False, f"aborted: {exc}", {}

    passed, details, artifacts = attempt(seed)
    retried = False
    if not passed:
        retried = True
        passed2, details2, artifacts2 = attempt(seed + RETRY_SEED_SHIFT)
        if passed2:
            passed, artifacts = True, artifacts2
            details = details2 + " [passed on retry]"
        else:
            details = details + " | retry: " + details2
    runtime = time.perf_counter() - start
    return CriterionResult(name, title, passed, retried, details, runtime,
                           artifacts)


def run_suite(names: Optional[Sequence[str]] = None,
              seed: int = DEFAULT_SEED) -> list:
    """Run the requested criteria (all by default, in order)."""
    selected = list(CRITERIA) if names is None else list(names)
    return [run_criterion(name, seed) for name in selected]


def suite_table(results) -> str:
    lines = []
    for r in results:
        flag = "PASS" if r.passed else "FAIL"
        retry = " (retried)" if r.retried else ""
        lines.append(f"{r.name:<4} {flag}{retry}  {r.title}: {r.details} "
                     f"[{r.runtime_s:.1f}s]")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines)


def acceptance_csv(results) -> str:
    """Summary CSV; excludes runtimes so re-runs are byte-identical."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["criterion", "title", "passed", "retried", "details"])
    for r in results:
        writer.writerow([r.name, r.title,
                         "true" if r.passed else "false",
                         "true" if r.retried else "false", r.details])
    return buf.getvalue()
