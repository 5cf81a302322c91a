"""Continuous monitoring of a static position: filtering and identities.

The monitored signal obeys dS_t = 2*gamma*<X>_t dt + dW_t and the
conditional (diagonal) measure obeys the closed nonlinear filtering
equation d mu_t = 2*gamma*(x - <X>_t) mu_t dW_t.  Everything here comes
in two interchangeable constructions:

* cheater: draw the true value first, then S_t = 2*gamma*xbar*t + B_t;
* observer: integrate the filtering equation step by step.

Both produce the same signal law, which several of the checks below
exercise.  The identities (closed-form posterior, innovation process,
change of measure, conditional variance) are exact in continuous time
and serve as oracles for the integrators.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, MeasureDiedError
from .measure import (
    GridMeasure,
    log_sum_exp,
    mean_and_variance,
    renormalize,
    sample_nodes,
)
from .noise import NoisePath, RngStream, TimeGrid, noise_matrix, sample_noise

__all__ = [
    "SignalPath",
    "KernelSnapshot",
    "DiscreteChainConfig",
    "GirsanovResult",
    "qnd_step",
    "qnd_step_linear",
    "posterior_closed_form",
    "log_normalizer",
    "simulate_cheater",
    "simulate_observer",
    "observer_batch",
    "cheater_signal_batch",
    "filter_replay",
    "kernel_closed_form",
    "pure_state_kernel",
    "collapse_width",
    "innovation_path",
    "innovation_batch",
    "girsanov_check",
    "conditional_variance",
    "conditional_variance_batch",
    "discrete_chain_step",
    "run_discrete_chain",
    "chain_outcome_batch",
]


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class SignalPath:
    """A monitored-signal trajectory S_{t_k} with its driving noise.

    mode records which construction produced it: "cheater" paths carry
    the drawn true value in ``xbar``; "observer" paths store the driving
    innovation increments in ``dW``.
    """

    grid: TimeGrid
    S: np.ndarray
    dW: NoisePath
    mode: str
    xbar: Optional[float] = None

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        object.__setattr__(self, "S", S)
        if S.shape != (self.grid.n_steps + 1,):
            raise ConfigError("S must have one value per grid node")
        if S[0] != 0.0:
            raise ConfigError("signal paths start at S=0")
        if self.mode not in ("cheater", "observer"):
            raise ConfigError(f"unknown signal mode {self.mode!r}")


@dataclass(frozen=True, eq=False)
class KernelSnapshot:
    """A two-point kernel rho(x_i, y_j) at one instant.

    Stored as log-magnitude plus phase so that the strongly damped
    off-diagonal entries (suppressed like exp(-gamma^2 t (x-y)^2 / 2))
    remain representable far below float underflow of the linear values.
    """

    x: np.ndarray
    y: np.ndarray
    log_magnitude: np.ndarray
    phase: np.ndarray
    time: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        lm = np.asarray(self.log_magnitude, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        if lm.shape != (x.size, y.size) or ph.shape != lm.shape:
            raise ConfigError("kernel arrays must have shape (len(x), len(y))")
        for name, arr in (("x", x), ("y", y), ("phase", ph)):
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"kernel {name} values must be finite")
        if np.any(np.isnan(lm)) or np.any(lm == np.inf):
            raise ConfigError("log_magnitude may contain -inf but never +inf/NaN")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "log_magnitude", lm)
        object.__setattr__(self, "phase", ph)

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_magnitude) * np.exp(1j * self.phase)

    def validate(self, tol: float = 1e-12) -> None:
        """Check Hermitian symmetry and a real nonnegative diagonal."""
        if self.x.size != self.y.size or not np.array_equal(self.x, self.y):
            raise ConfigError("hermiticity check needs identical x and y grids")
        v = self.values
        scale = np.max(np.abs(v))
        if scale == 0.0:
            return
        if np.max(np.abs(v - v.conj().T)) > tol * scale:
            raise ConfigError("kernel is not Hermitian within tolerance")
        d = np.diagonal(v)
        if np.max(np.abs(d.imag)) > tol * scale or np.min(d.real) < -tol * scale:
            raise ConfigError("kernel diagonal must be real and nonnegative")

    def diagonal_measure(self) -> GridMeasure:
        """Normalized measure carried by the kernel diagonal."""
        if self.x.size != self.y.size or not np.array_equal(self.x, self.y):
            raise ConfigError("diagonal measure needs identical x and y grids")
        dx = float(self.x[1] - self.x[0])
        lw = np.diagonal(self.log_magnitude).copy()
        return renormalize(GridMeasure(float(self.x[0]), dx, lw))


def pure_state_kernel(x: np.ndarray, psi: np.ndarray, time: float = 0.0) -> KernelSnapshot:
    """Rank-one kernel psi(x) * conj(psi(y)) on a common grid."""
    x = np.asarray(x, dtype=float)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != x.shape:
        raise ConfigError("psi must be sampled on the x grid")
    with np.errstate(divide="ignore"):
        lm = np.log(np.abs(psi))
    ph = np.angle(psi)
    return KernelSnapshot(
        x, x, lm[:, None] + lm[None, :], ph[:, None] - ph[None, :], time
    )


# ---------------------------------------------------------------------------
# one monitoring step (shared by single-path, batched, and diffusion code)


def _monitor_update(lw, x, dx, dt, dW, two_gamma):
    """Log-domain monitoring update on raw log-weight arrays.

    Exponential Euler step: multiply each node weight by
    exp(a*dW - a^2*dt/2) with a = 2*gamma*(x - <X>), then renormalize.
    Works on shape (n,) or batched (paths, n) arrays; batched rows are
    bit-identical to the corresponding single-path updates because all
    reductions run along the same contiguous axis.

    Returns (lw_normalized, mean, dS, log_total) where log_total is the
    pre-normalization log-mass (its departure from 0 is the per-step
    mass deficit of the scheme, O(dt) pathwise).
    """
    w = np.exp(lw)
    m = np.sum(w * x, axis=-1) * dx
    a = two_gamma * (x - np.expand_dims(m, -1))
    lw2 = lw + a * np.expand_dims(dW, -1) - (0.5 * dt) * a * a
    log_total = log_sum_exp(lw2, axis=-1) + np.log(dx)
    lw2 = lw2 - np.expand_dims(log_total, -1)
    dS = two_gamma * m * dt + dW
    return lw2, m, dS, log_total


def _require_step_args(dt: float, gamma: float) -> None:
    if dt <= 0.0 or not np.isfinite(dt):
        raise ConfigError(f"dt must be positive, got {dt}")
    if gamma <= 0.0 or not np.isfinite(gamma):
        raise ConfigError(f"gamma must be positive, got {gamma}")


def qnd_step(mu: GridMeasure, dW: float, dt: float, gamma: float):
    """One exponential log-domain update of the filtering equation.

    Returns (updated measure, signal increment dS).  The update is the
    stochastic-exponential discretization: it preserves positivity for
    any step size, and driven by a given signal path it reproduces the
    closed-form posterior exactly (the x-linear log-increments telescope
    to 2*gamma*x*S_t - 2*gamma^2*x^2*t, independent of the mean sequence).
    """
    _require_step_args(dt, gamma)
    if not mu.normalized:
        raise ConfigError("qnd_step requires a normalized measure")
    lw2, _, dS, log_total = _monitor_update(
        mu.log_weights, mu.x, mu.dx, dt, float(dW), 2.0 * gamma
    )
    if np.isneginf(log_total):
        raise MeasureDiedError("measure died during monitoring step")
    return GridMeasure(mu.x_min, mu.dx, lw2, normalized=True), float(dS)


def qnd_step_linear(mu: GridMeasure, dW: float, dt: float, gamma: float):
    """One literal Euler-Maruyama update of the filtering equation.

    Multiplies weights by (1 + a*dW) in the linear domain, the direct
    discretization of d mu = 2 gamma (x - <X>) mu dW.  Unlike qnd_step
    this carries a genuine O(sqrt(dt)) strong discretization error and
    can produce negative weights for large |a*dW| (clipped to zero mass
    here); it exists as the convergence-study counterpart of qnd_step.
    """
    _require_step_args(dt, gamma)
    if not mu.normalized:
        raise ConfigError("qnd_step_linear requires a normalized measure")
    x = mu.x
    w = mu.masses()
    m = float(np.sum(w * x))
    a = 2.0 * gamma * (x - m)
    w2 = np.maximum(w * (1.0 + a * float(dW)), 0.0)
    with np.errstate(divide="ignore"):
        lw2 = np.log(w2) - np.log(mu.dx)
    out = renormalize(GridMeasure(mu.x_min, mu.dx, lw2))
    dS = 2.0 * gamma * m * dt + float(dW)
    return out, float(dS)


# ---------------------------------------------------------------------------
# closed-form posterior


def posterior_closed_form(mu0: GridMeasure, S_t: float, t: float,
                          gamma: float) -> GridMeasure:
    """Posterior measure given signal value S_t at time t.

    Reweights the prior by exp(alpha*S_t - alpha^2 t / 2) with
    alpha = 2*gamma*x (the observable actually coupled to the signal),
    then renormalizes.  This is the exact conditional law of the
    monitored variable given the signal history (it depends on the path
    only through the endpoint).
    """
    if t < 0.0:
        raise ConfigError(f"t must be nonnegative, got {t}")
    if gamma <= 0.0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    if not mu0.normalized:
        raise ConfigError("posterior_closed_form requires a normalized prior")
    alpha = 2.0 * gamma * mu0.x
    lw = mu0.log_weights + alpha * S_t - 0.5 * alpha * alpha * t
    return renormalize(GridMeasure(mu0.x_min, mu0.dx, lw))


def log_normalizer(mu0: GridMeasure, S_t: float, t: float, gamma: float) -> float:
    """log of Z_t = integral of exp(alpha*S_t - alpha^2 t/2) dmu0.

    The derivative of this in S at fixed t is 2*gamma*<X>_t, the signal
    drift of the filtered dynamics.
    """
    alpha = 2.0 * gamma * mu0.x
    lw = mu0.log_weights + alpha * S_t - 0.5 * alpha * alpha * t
    return float(log_sum_exp(lw) + np.log(mu0.dx))


# ---------------------------------------------------------------------------
# trajectory constructions


def simulate_cheater(mu0: GridMeasure, grid: TimeGrid, gamma: float,
                     rng: RngStream):
    """Signal built from a drawn true value: S_t = 2*gamma*xbar*t + B_t.

    Returns (xbar, SignalPath).  The same stream drives both the draw of
    xbar and the Brownian increments, so a (seed, stream_id) pair fully
    determines the path.
    """
    _require_step_args(grid.dt, gamma)
    if not mu0.normalized:
        raise ConfigError("simulate_cheater requires a normalized prior")
    gen = rng.generator()
    xbar = float(sample_nodes(mu0, gen))
    inc = gen.standard_normal(grid.n_steps) * np.sqrt(grid.dt)
    rel_t = grid.times() - grid.t0
    S = 2.0 * gamma * xbar * rel_t + np.concatenate(([0.0], np.cumsum(inc)))
    path = SignalPath(grid, S, NoisePath(grid, inc), mode="cheater", xbar=xbar)
    return xbar, path


def simulate_observer(mu0: GridMeasure, grid: TimeGrid, gamma: float,
                      rng: RngStream, method: str = "exponential",
                      record_every: int = 1):
    """Integrate the filtering equation driven by fresh noise.

    Returns (measures, SignalPath) where measures holds the posterior at
    t_0 and then every ``record_every``-th node (the final node always
    included).  method selects the exponential log-domain step (default)
    or the literal linear Euler-Maruyama step.
    """
    step = {"exponential": qnd_step, "linear": qnd_step_linear}.get(method)
    if step is None:
        raise ConfigError(f"unknown integration method {method!r}")
    if record_every < 1:
        raise ConfigError("record_every must be >= 1")
    noise = sample_noise(grid, rng)
    S = np.zeros(grid.n_steps + 1)
    mu = mu0
    measures = [mu]
    for k in range(grid.n_steps):
        mu, dS = step(mu, noise.increments[k], grid.dt, gamma)
        S[k + 1] = S[k] + dS
        if (k + 1) % record_every == 0 or k + 1 == grid.n_steps:
            measures.append(mu)
    path = SignalPath(grid, S, noise, mode="observer")
    return measures, path


def _record_indices(grid: TimeGrid, record_times) -> np.ndarray:
    if record_times is None:
        return np.arange(1, grid.n_steps + 1)
    ks = sorted({grid.index_at(t) for t in record_times})
    if any(k == 0 for k in ks):
        raise ConfigError("record times must be after the grid start")
    return np.asarray(ks, dtype=int)


@dataclass(frozen=True)
class ObserverEnsemble:
    """Recorded state of a batch of observer trajectories."""

    times: np.ndarray      # recorded node times, shape (n_rec,)
    S: np.ndarray          # signal values, shape (n_paths, n_rec)
    post_mean: np.ndarray  # posterior mean of x
    post_var: np.ndarray   # posterior variance of x
    gamma: float


def observer_batch(mu0: GridMeasure, grid: TimeGrid, gamma: float,
                   base_rng: RngStream, n_paths: int,
                   record_times: Optional[Sequence[float]] = None) -> ObserverEnsemble:
    """Vectorized observer ensemble on streams (seed, 0..n_paths-1).

    Row i reproduces simulate_observer under RngStream(seed, i) bit for
    bit; the paths are merely stepped together for speed.
    """
    _require_step_args(grid.dt, gamma)
    if not mu0.normalized:
        raise ConfigError("observer_batch requires a normalized prior")
    ks = _record_indices(grid, record_times)
    rec_pos = {int(k): j for j, k in enumerate(ks)}
    noise = noise_matrix(grid, base_rng, n_paths)
    x = mu0.x
    dx = mu0.dx
    lw = np.tile(mu0.log_weights, (n_paths, 1))
    S = np.zeros(n_paths)
    out_S = np.empty((n_paths, ks.size))
    out_m = np.empty((n_paths, ks.size))
    out_v = np.empty((n_paths, ks.size))
    two_gamma = 2.0 * gamma
    for k in range(grid.n_steps):
        lw, m, dS, log_total = _monitor_update(lw, x, dx, grid.dt,
                                               noise[:, k], two_gamma)
        if np.any(np.isneginf(log_total)):
            raise MeasureDiedError("measure died during observer batch")
        S = S + dS
        j = rec_pos.get(k + 1)
        if j is not None:
            w = np.exp(lw) * dx
            mean = np.sum(w * x, axis=-1)
            out_S[:, j] = S
            out_m[:, j] = mean
            out_v[:, j] = np.sum(w * (x - mean[:, None]) ** 2, axis=-1)
    return ObserverEnsemble(grid.t0 + ks * grid.dt, out_S, out_m, out_v, gamma)


def cheater_signal_batch(mu0: GridMeasure, grid: TimeGrid, gamma: float,
                         base_rng: RngStream, n_paths: int,
                         record_times: Optional[Sequence[float]] = None,
                         stream_offset: int = 0):
    """Cheater ensemble on streams (seed, offset..offset+n_paths-1).

    Returns (xbar, S) with xbar shape (n_paths,) and S shape
    (n_paths, n_rec); record_times=None records every node including
    t_0.  Row i is bit-identical to simulate_cheater on stream
    stream_offset + i, so chunked calls tile a larger ensemble exactly.
    """
    if not mu0.normalized:
        raise ConfigError("cheater_signal_batch requires a normalized prior")
    if record_times is None:
        ks = np.arange(grid.n_steps + 1)
    else:
        ks = np.asarray(sorted({grid.index_at(t) for t in record_times}), dtype=int)
    xbars = np.empty(n_paths)
    S = np.empty((n_paths, ks.size))
    rel_t = ks * grid.dt
    sqrt_dt = np.sqrt(grid.dt)
    for i in range(n_paths):
        gen = base_rng.with_stream(stream_offset + i).generator()
        xb = float(sample_nodes(mu0, gen))
        inc = gen.standard_normal(grid.n_steps) * sqrt_dt
        B = np.concatenate(([0.0], np.cumsum(inc)))
        xbars[i] = xb
        S[i] = 2.0 * gamma * xb * rel_t + B[ks]
    return xbars, S


def filter_replay(mu0: GridMeasure, dS: np.ndarray, dt: float, gamma: float,
                  method: str = "exponential") -> np.ndarray:
    """Drive the filtering equation with recorded signal increments.

    dS has shape (n_paths, n_steps); each row is replayed through the
    chosen update (the innovation at every step is recovered as
    dW = dS - 2 gamma <X> dt with <X> the current posterior mean).
    Returns the node-mass trajectories, shape (n_paths, n_steps+1,
    n_points).  Row arithmetic matches the single-path qnd_step /
    qnd_step_linear sequence bit for bit.
    """
    _require_step_args(dt, gamma)
    if method not in ("exponential", "linear"):
        raise ConfigError(f"method must be exponential or linear, got {method!r}")
    if not mu0.normalized:
        raise ConfigError("filter_replay requires a normalized prior")
    dS = np.asarray(dS, dtype=float)
    if dS.ndim != 2:
        raise ConfigError("dS must be (n_paths, n_steps)")
    P, n = dS.shape
    x = mu0.x
    dx = mu0.dx
    two_gamma = 2.0 * gamma
    lw = np.tile(mu0.log_weights, (P, 1))
    out = np.empty((P, n + 1, mu0.n_points))
    out[:, 0] = np.exp(lw) * dx
    log_dx = np.log(dx)
    for k in range(n):
        if method == "exponential":
            w = np.exp(lw)
            m = np.sum(w * x, axis=-1) * dx
            dW = dS[:, k] - two_gamma * m * dt
            lw, _, _, log_total = _monitor_update(lw, x, dx, dt, dW, two_gamma)
        else:
            w = np.exp(lw) * dx
            m = np.sum(w * x, axis=-1)
            dW = dS[:, k] - two_gamma * m * dt
            a = two_gamma * (x - m[:, None])
            w2 = np.maximum(w * (1.0 + a * dW[:, None]), 0.0)
            with np.errstate(divide="ignore"):
                lw = np.log(w2) - log_dx
            log_total = log_sum_exp(lw, axis=-1) + log_dx
            lw = lw - log_total[:, None]
        if np.any(np.isneginf(log_total)):
            raise MeasureDiedError("measure died during filter replay")
        out[:, k + 1] = np.exp(lw) * dx
    return out


# ---------------------------------------------------------------------------
# closed-form kernel


def kernel_closed_form(rho0: KernelSnapshot, S_t: float, t: float,
                       gamma: float):
    """Unnormalized monitored kernel at duration t past the snapshot.

    Multiplies rho0(x, y) by exp(-gamma^2 t (x^2+y^2) + gamma (x+y) S_t);
    the phase is untouched.  Also returns the normalizer
    Z_t = integral rho0(x,x) exp(-2 gamma^2 t x^2 + 2 gamma x S_t) dx,
    computed in the log domain from the snapshot diagonal.
    """
    if t < 0.0:
        raise ConfigError(f"t must be nonnegative, got {t}")
    if gamma <= 0.0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    x = rho0.x[:, None]
    y = rho0.y[None, :]
    lm = rho0.log_magnitude - gamma**2 * t * (x * x + y * y) \
        + gamma * (x + y) * S_t
    snap = KernelSnapshot(rho0.x, rho0.y, lm, rho0.phase, rho0.time + t)
    diag = np.diagonal(rho0.log_magnitude)
    xd = rho0.x
    dx = float(rho0.x[1] - rho0.x[0])
    log_Z = log_sum_exp(diag - 2.0 * gamma**2 * t * xd * xd
                        + 2.0 * gamma * xd * S_t) + np.log(dx)
    return snap, float(np.exp(log_Z))


def collapse_width(mu: GridMeasure) -> float:
    """Standard deviation of the measure (posterior localization width)."""
    _, v = mean_and_variance(mu)
    return float(np.sqrt(max(v, 0.0)))


# ---------------------------------------------------------------------------
# innovation process


def innovation_path(path: SignalPath, mu0: GridMeasure, gamma: float) -> np.ndarray:
    """Innovation W_t = S_t - integral of 2*gamma*<X>_s ds (left rule).

    The posterior mean at each node comes from the closed-form posterior
    driven by the recorded signal.  Under either construction of the
    signal this process is a standard Brownian motion with respect to
    the signal filtration.
    """
    grid = path.grid
    W = np.empty(grid.n_steps + 1)
    drift = 0.0
    for k in range(grid.n_steps + 1):
        W[k] = path.S[k] - drift
        if k < grid.n_steps:
            post = posterior_closed_form(mu0, path.S[k], k * grid.dt, gamma)
            m, _ = mean_and_variance(post)
            drift += 2.0 * gamma * m * grid.dt
    return W


def innovation_batch(S: np.ndarray, grid: TimeGrid, mu0: GridMeasure,
                     gamma: float, record_indices: Sequence[int]) -> np.ndarray:
    """Vectorized innovation at selected node indices.

    S has shape (n_paths, n_steps+1) holding every node of each path.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[1] != grid.n_steps + 1:
        raise ConfigError("S must be (n_paths, n_steps+1)")
    ks = np.asarray(record_indices, dtype=int)
    rec_pos = {int(k): j for j, k in enumerate(ks)}
    alpha = 2.0 * gamma * mu0.x
    lw0 = mu0.log_weights
    out = np.empty((S.shape[0], ks.size))
    drift = np.zeros(S.shape[0])
    for k in range(grid.n_steps + 1):
        j = rec_pos.get(k)
        if j is not None:
            out[:, j] = S[:, k] - drift
        if k < grid.n_steps:
            t_k = k * grid.dt
            logits = lw0 + alpha * S[:, k, None] - 0.5 * alpha**2 * t_k
            logits -= log_sum_exp(logits, axis=-1)[:, None]
            w = np.exp(logits)
            mean_alpha = np.sum(w * alpha, axis=-1)
            drift += mean_alpha * grid.dt
    return out


# ---------------------------------------------------------------------------
# change of measure


@dataclass(frozen=True)
class GirsanovResult:
    label: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = fsum(values) / n
    var = fsum((values - mean) ** 2) / (n - 1)
    return mean, float(np.sqrt(var / n))


def girsanov_check(functionals, mu0: GridMeasure, t: float, n_samples: int,
                   rng: RngStream) -> list[GirsanovResult]:
    """Monte-Carlo check of the signal change of measure.

    For each (label, f) pair, estimates E[f(A, S_t)] with S_t = A t + B_t
    (A drawn from mu0, independent B) against the reweighted expectation
    E[f(A, B_t) exp(A B_t - A^2 t / 2)] on independent draws, returning
    both estimates with standard errors.  mu0 is the law of the drift
    variable A, i.e. a prior already expressed in observable units.
    """
    if t <= 0.0:
        raise ConfigError(f"t must be positive, got {t}")
    if n_samples < 2:
        raise ConfigError("n_samples must be >= 2")
    gen = rng.generator()
    results = []
    root_t = np.sqrt(t)
    for label, f in functionals:
        A = sample_nodes(mu0, gen, size=n_samples)
        B = gen.standard_normal(n_samples) * root_t
        lhs, lhs_se = _mean_se(np.asarray(f(A, A * t + B), dtype=float))
        A2 = sample_nodes(mu0, gen, size=n_samples)
        B2 = gen.standard_normal(n_samples) * root_t
        weight = np.exp(A2 * B2 - 0.5 * A2 * A2 * t)
        rhs, rhs_se = _mean_se(np.asarray(f(A2, B2), dtype=float) * weight)
        results.append(GirsanovResult(label, lhs, lhs_se, rhs, rhs_se))
    return results


# ---------------------------------------------------------------------------
# conditional variance


def conditional_variance(mu0: GridMeasure, S_t: float, t: float) -> float:
    """Posterior variance of the drift variable given S_t at time t.

    mu0 is the prior of the drift variable in observable units (so the
    posterior reweights by exp(alpha S - alpha^2 t / 2) with alpha equal
    to the node coordinate).  Computed two independent ways - the direct
    second moment and the pair integral of (alpha - beta)^2 / 2 - which
    must agree to 1e-10; their common value is returned.
    """
    post = posterior_closed_form(mu0, S_t, t, gamma=0.5)
    _, direct = mean_and_variance(post)
    w = post.masses()
    alpha = post.x
    diff = alpha[:, None] - alpha[None, :]
    pair = 0.5 * float(w @ (diff * diff) @ w)
    if abs(direct - pair) > 1e-10 * max(1.0, abs(direct)):
        raise ArithmeticError(
            f"conditional variance formulas disagree: {direct!r} vs {pair!r}"
        )
    return direct


def conditional_variance_batch(mu0: GridMeasure, S: np.ndarray,
                               t: float) -> np.ndarray:
    """Vectorized direct-formula posterior variance over many signals."""
    S = np.atleast_1d(np.asarray(S, dtype=float))
    alpha = mu0.x
    logits = mu0.log_weights + alpha * S[:, None] - 0.5 * alpha**2 * t
    logits -= log_sum_exp(logits, axis=-1)[:, None]
    w = np.exp(logits)
    m = np.sum(w * alpha, axis=-1)
    return np.sum(w * (alpha - m[:, None]) ** 2, axis=-1)


# ---------------------------------------------------------------------------
# discrete monitoring chain


@dataclass(frozen=True)
class DiscreteChainConfig:
    """Repeated discrete generalized measurement of a static variable.

    outcome_probabilities(i, alpha) returns p(i | alpha) for outcome
    i in 0..n_outcomes-1, vectorized over alpha.  Each update multiplies
    the measure by the likelihood row of the sampled outcome; outcomes
    are drawn with their predictive probabilities under the current
    measure.
    """

    outcome_probabilities: Callable[[int, np.ndarray], np.ndarray]
    n_outcomes: int
    mu0: GridMeasure
    n_rounds: int

    def __post_init__(self):
        if not 1 <= self.n_outcomes <= 16:
            raise ConfigError("n_outcomes must lie in 1..16")
        if self.n_rounds < 1:
            raise ConfigError("n_rounds must be >= 1")
        if not self.mu0.normalized:
            raise ConfigError("chain prior must be normalized")
        self.probability_matrix(self.mu0)  # validate on the prior's grid

    def probability_matrix(self, mu: GridMeasure) -> np.ndarray:
        """p(i | alpha) on mu's grid, shape (n_points, n_outcomes)."""
        P = np.empty((mu.n_points, self.n_outcomes))
        for i in range(self.n_outcomes):
            P[:, i] = np.asarray(self.outcome_probabilities(i, mu.x), dtype=float)
        if np.any(P < 0.0) or not np.all(np.isfinite(P)):
            raise ConfigError("outcome probabilities must be finite and >= 0")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ConfigError("outcome probabilities must sum to 1 per alpha")
        dead = ~np.any(P > 0.0, axis=0)
        if np.any(dead):
            raise ConfigError(
                f"outcome {int(np.flatnonzero(dead)[0])} has zero probability "
                "for every alpha on the grid"
            )
        return P


def discrete_chain_step(mu: GridMeasure, cfg: DiscreteChainConfig,
                        gen: np.random.Generator):
    """One measurement round: sample an outcome, reweight, renormalize."""
    P = cfg.probability_matrix(mu)
    w = mu.masses()
    probs = w @ P
    r = float(gen.random())
    outcome = int(np.searchsorted(np.cumsum(probs), r * probs.sum()))
    outcome = min(outcome, cfg.n_outcomes - 1)
    with np.errstate(divide="ignore"):
        lw = mu.log_weights + np.log(P[:, outcome])
    return renormalize(GridMeasure(mu.x_min, mu.dx, lw)), outcome


def run_discrete_chain(cfg: DiscreteChainConfig, rng: RngStream):
    """Run the chain for cfg.n_rounds; returns (outcomes, final measure)."""
    gen = rng.generator()
    mu = cfg.mu0
    outcomes = np.empty(cfg.n_rounds, dtype=int)
    for k in range(cfg.n_rounds):
        mu, outcomes[k] = discrete_chain_step(mu, cfg, gen)
    return outcomes, mu


def chain_outcome_batch(cfg: DiscreteChainConfig, n_runs: int,
                        rng: RngStream) -> np.ndarray:
    """Outcome sequences of n_runs independent chains, shape (n_runs, n_rounds).

    Vectorized over runs with a single stream (one uniform per run per
    round, drawn round by round), which keeps it deterministic for a
    given (seed, stream_id).
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    P = cfg.probability_matrix(cfg.mu0)
    gen = rng.generator()
    lw = np.tile(cfg.mu0.log_weights, (n_runs, 1))
    dx = cfg.mu0.dx
    out = np.empty((n_runs, cfg.n_rounds), dtype=int)
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    for k in range(cfg.n_rounds):
        w = np.exp(lw) * dx
        probs = w @ P
        cum = np.cumsum(probs, axis=1)
        r = gen.random(n_runs) * cum[:, -1]
        idx = np.minimum(
            (r[:, None] >= cum).sum(axis=1), cfg.n_outcomes - 1
        )
        out[:, k] = idx
        lw = lw + logP[np.arange(cfg.mu0.n_points)[None, :], idx[:, None]]
        lw = lw - (log_sum_exp(lw, axis=-1) + np.log(dx))[:, None]
    return out
