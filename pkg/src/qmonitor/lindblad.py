"""Monitored diffusions: internal dissipative dynamics plus monitoring.

The measure now evolves under a Fokker-Planck generator (drift U,
dissipation V) in addition to the monitoring term:

    d mu_t = [ (1/2) d^2(V^2 mu)/dx^2 - d(U mu)/dx ] dt
             + 2 gamma (x - <X>_t) mu_t dW_t.

As gamma grows the measure concentrates on a single classical
trajectory of dY = U(Y) dt + V(Y) dB, which is what the sweep utilities
quantify.  The generator is discretized in flux form with zero-flux
boundaries (mass exactly conserved); its backward action on test
functions is the exact matrix transpose, so the duality
<L* mu, phi> = <mu, L phi> holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import fsum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, MeasureDiedError, StabilityError
from .measure import GridMeasure, log_sum_exp, renormalize
from .noise import NoisePath, RngStream, TimeGrid, noise_matrix, sample_noise
from .qnd import KernelSnapshot, SignalPath, _monitor_update

__all__ = [
    "LindbladSpec",
    "MonitoredDiffusionConfig",
    "FokkerPlanckOperator",
    "fokker_planck_generator",
    "monitored_diffusion_step",
    "simulate_monitored_diffusion",
    "diffusion_batch",
    "DiffusionEnsemble",
    "classical_sde_oracle",
    "classical_sde_batch",
    "strong_limit_sweep",
    "SweepRow",
    "SweepReport",
    "separated_kernel",
    "separated_kernel_residual",
]


@dataclass(frozen=True)
class LindbladSpec:
    """Classical limit data of an internal generator: drift and dissipation.

    U and V are vectorized callables of position; V must be nonnegative
    wherever it is evaluated.  Optional derivative callables travel with
    the spec for consumers that need them (e.g. smoothness diagnostics);
    the finite-difference generator itself does not.
    """

    U: Callable[[np.ndarray], np.ndarray]
    V: Callable[[np.ndarray], np.ndarray]
    dU: Optional[Callable] = None
    dV: Optional[Callable] = None
    ddV: Optional[Callable] = None

    def drift_values(self, x: np.ndarray) -> np.ndarray:
        u = np.asarray(self.U(x), dtype=float)
        if not np.all(np.isfinite(u)):
            raise ConfigError("drift U is not finite on the grid")
        return np.broadcast_to(u, x.shape).copy()

    def dissipation_squared(self, x: np.ndarray) -> np.ndarray:
        v = np.asarray(self.V(x), dtype=float)
        v = np.broadcast_to(v, x.shape)
        if not np.all(np.isfinite(v)):
            raise ConfigError("dissipation V is not finite on the grid")
        if np.any(v < 0.0):
            raise ConfigError("dissipation V must be nonnegative on the grid")
        return (v * v).copy()


def _pure_diffusion_spec(D: float) -> LindbladSpec:
    root = np.sqrt(D)
    return LindbladSpec(U=lambda x: np.zeros_like(x),
                        V=lambda x, _r=root: np.full_like(x, _r))


@dataclass(frozen=True)
class FokkerPlanckOperator:
    """Tridiagonal flux-form discretization of the forward generator.

    forward() acts on density values (the adjoint generator on measures);
    backward() is its exact transpose acting on test-function values.
    Both accept (..., n) stacks.  Zero-flux end faces make forward mass
    conserving by telescoping.
    """

    x: np.ndarray
    dx: float
    sub: np.ndarray   # coefficient of w[i-1] in out[i]
    main: np.ndarray  # coefficient of w[i]   in out[i]
    sup: np.ndarray   # coefficient of w[i+1] in out[i]
    max_v2: float

    @property
    def is_zero(self) -> bool:
        return self.max_v2 == 0.0 and not (np.any(self.sub) or np.any(self.main)
                                           or np.any(self.sup))

    def forward(self, w: np.ndarray) -> np.ndarray:
        out = self.main * w
        out[..., :-1] += self.sup * w[..., 1:]
        out[..., 1:] += self.sub * w[..., :-1]
        return out

    def backward(self, phi: np.ndarray) -> np.ndarray:
        out = self.main * phi
        out[..., :-1] += self.sub * phi[..., 1:]
        out[..., 1:] += self.sup * phi[..., :-1]
        return out

    def check_stability(self, dt: float) -> None:
        if self.max_v2 * dt / (self.dx * self.dx) > 0.5:
            raise StabilityError(
                "grid too coarse for explicit stepping: "
                f"max(V^2)*dt/dx^2 = {self.max_v2 * dt / self.dx**2:.3g} > 0.5"
            )


def fokker_planck_generator(spec, grid_like) -> FokkerPlanckOperator:
    """Build the generator on a spatial grid.

    spec is a LindbladSpec or a bare diffusion constant D >= 0 (drift-free
    dissipation V = sqrt(D)).  grid_like supplies the nodes: a GridMeasure
    or an (x_min, dx, n_points) triple.
    """
    if isinstance(spec, LindbladSpec):
        s = spec
    else:
        D = float(spec)
        if D < 0.0 or not np.isfinite(D):
            raise ConfigError(f"diffusion constant must be >= 0, got {spec}")
        s = _pure_diffusion_spec(D)
    if isinstance(grid_like, GridMeasure):
        x = grid_like.x
        dx = grid_like.dx
    else:
        x_min, dx, n_points = grid_like
        if dx <= 0.0 or n_points < 2:
            raise ConfigError("grid needs dx > 0 and n_points >= 2")
        x = x_min + dx * np.arange(int(n_points))
    u = s.drift_values(x)
    v2 = s.dissipation_squared(x)
    n = x.size
    # Face flux between i and i+1:
    #   G_{i+1/2} = (v2[i+1] w[i+1] - v2[i] w[i]) / (2 dx)
    #               - (u[i] w[i] + u[i+1] w[i+1]) / 2
    # out[i] = (G_{i+1/2} - G_{i-1/2}) / dx, end faces zero.
    sup = np.zeros(n - 1)
    sub = np.zeros(n - 1)
    main = np.zeros(n)
    inv = 1.0 / dx
    sup += (v2[1:] / (2.0 * dx) - u[1:] / 2.0) * inv
    sub += (v2[:-1] / (2.0 * dx) + u[:-1] / 2.0) * inv
    main[:-1] += (-v2[:-1] / (2.0 * dx) - u[:-1] / 2.0) * inv
    main[1:] += (-v2[1:] / (2.0 * dx) + u[1:] / 2.0) * inv
    return FokkerPlanckOperator(x, float(dx), sub, main, sup, float(np.max(v2)))


@dataclass(frozen=True)
class MonitoredDiffusionConfig:
    """Monitored diffusion run configuration.

    Exactly one of ``D`` (drift-free diffusion constant) or ``spec``
    (general drift/dissipation pair) selects the internal dynamics.
    The explicit generator step must satisfy max(V^2)*dt/dx^2 <= 1/2,
    checked here before any stepping starts.
    """

    gamma: float
    mu0: GridMeasure
    grid: TimeGrid
    rng: RngStream
    D: Optional[float] = None
    spec: Optional[LindbladSpec] = None

    def __post_init__(self):
        if (self.D is None) == (self.spec is None):
            raise ConfigError("provide exactly one of D or spec")
        if self.D is not None and (self.D < 0.0 or not np.isfinite(self.D)):
            raise ConfigError(f"D must be >= 0, got {self.D}")
        if self.gamma <= 0.0 or not np.isfinite(self.gamma):
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.mu0.normalized:
            raise ConfigError("mu0 must be normalized")
        op = self.operator()
        op.check_stability(self.grid.dt)

    def operator(self) -> FokkerPlanckOperator:
        source = self.spec if self.spec is not None else self.D
        return fokker_planck_generator(source, self.mu0)


def _generator_then_monitor(lw, op, x, dx, dt, dW, two_gamma):
    """Lie split step: explicit generator substep, then monitoring update.

    Negative densities created by the central drift stencil are clipped
    to zero mass before re-entering the log domain; the subsequent
    renormalization absorbs the (tiny) clipped mass into the reported
    deficit.  A zero generator skips the linear-domain round trip so the
    pure-monitoring path is bit-identical to qnd_step.
    """
    if not op.is_zero:
        w = np.exp(lw)
        w = w + dt * op.forward(w)
        np.maximum(w, 0.0, out=w)
        with np.errstate(divide="ignore"):
            lw = np.log(w)
    return _monitor_update(lw, x, dx, dt, dW, two_gamma)


def monitored_diffusion_step(mu: GridMeasure, cfg: MonitoredDiffusionConfig,
                             dW: float):
    """One split step of the monitored diffusion; returns (measure, dS)."""
    if not mu.normalized:
        raise ConfigError("monitored_diffusion_step requires a normalized measure")
    op = cfg.operator()
    op.check_stability(cfg.grid.dt)
    lw2, _, dS, log_total = _generator_then_monitor(
        mu.log_weights, op, mu.x, mu.dx, cfg.grid.dt, float(dW),
        2.0 * cfg.gamma,
    )
    if np.isneginf(log_total):
        raise MeasureDiedError("measure died during monitored diffusion step")
    return GridMeasure(mu.x_min, mu.dx, lw2, normalized=True), float(dS)


def simulate_monitored_diffusion(cfg: MonitoredDiffusionConfig,
                                 record_every: int = 1):
    """Single monitored-diffusion trajectory driven by cfg.rng.

    Returns (measures, SignalPath) like the observer simulation.
    """
    if record_every < 1:
        raise ConfigError("record_every must be >= 1")
    op = cfg.operator()
    op.check_stability(cfg.grid.dt)
    noise = sample_noise(cfg.grid, cfg.rng)
    grid = cfg.grid
    x, dx = cfg.mu0.x, cfg.mu0.dx
    two_gamma = 2.0 * cfg.gamma
    lw = cfg.mu0.log_weights
    S = np.zeros(grid.n_steps + 1)
    measures = [cfg.mu0]
    for k in range(grid.n_steps):
        lw, _, dS, log_total = _generator_then_monitor(
            lw, op, x, dx, grid.dt, noise.increments[k], two_gamma)
        if np.isneginf(log_total):
            raise MeasureDiedError("measure died during monitored diffusion")
        S[k + 1] = S[k] + dS
        if (k + 1) % record_every == 0 or k + 1 == grid.n_steps:
            measures.append(GridMeasure(cfg.mu0.x_min, dx, lw, normalized=True))
    return measures, SignalPath(grid, S, noise, mode="observer")


@dataclass(frozen=True)
class DiffusionEnsemble:
    """Recorded observables of a batch of monitored-diffusion paths.

    phi_mean[label][p, r] is mu_t[phi] for path p at recorded time r;
    phi_sq carries mu_t[phi^2].  Rows listed in failed died along the
    way and hold NaN.
    """

    times: np.ndarray
    post_mean: np.ndarray
    post_var: np.ndarray
    phi_mean: dict
    phi_sq: dict
    failed: list

    @property
    def ok(self) -> np.ndarray:
        mask = np.ones(self.post_mean.shape[0], dtype=bool)
        mask[self.failed] = False
        return mask


def diffusion_batch(cfg: MonitoredDiffusionConfig, n_paths: int,
                    base_rng: RngStream,
                    record_times: Optional[Sequence[float]] = None,
                    observables: Sequence = ()) -> DiffusionEnsemble:
    """Vectorized monitored-diffusion ensemble on streams (seed, 0..n-1)."""
    op = cfg.operator()
    op.check_stability(cfg.grid.dt)
    grid = cfg.grid
    if record_times is None:
        ks = np.array([grid.n_steps])
    else:
        ks = np.asarray(sorted({grid.index_at(t) for t in record_times}), dtype=int)
        if np.any(ks == 0):
            raise ConfigError("record times must be after the grid start")
    rec_pos = {int(k): j for j, k in enumerate(ks)}
    x, dx = cfg.mu0.x, cfg.mu0.dx
    two_gamma = 2.0 * cfg.gamma
    phi_vals = {}
    for phi in observables:
        label = getattr(phi, "label", getattr(phi, "__name__", repr(phi)))
        v = np.asarray(phi(x), dtype=float)
        if not np.all(np.isfinite(v)):
            raise ConfigError(f"observable {label!r} is unbounded on the grid")
        phi_vals[label] = v
    noise = noise_matrix(grid, base_rng, n_paths)
    lw = np.tile(cfg.mu0.log_weights, (n_paths, 1))
    dead = np.zeros(n_paths, dtype=bool)
    R = ks.size
    out_mean = np.full((n_paths, R), np.nan)
    out_var = np.full((n_paths, R), np.nan)
    out_phi = {lb: np.full((n_paths, R), np.nan) for lb in phi_vals}
    out_phi2 = {lb: np.full((n_paths, R), np.nan) for lb in phi_vals}
    for k in range(grid.n_steps):
        lw, _, _, log_total = _generator_then_monitor(
            lw, op, x, dx, grid.dt, noise[:, k], two_gamma)
        newly = np.isneginf(log_total) & ~dead
        if np.any(newly):
            # freeze dead rows on the prior so later steps stay finite
            lw[newly] = cfg.mu0.log_weights
            dead |= newly
        j = rec_pos.get(k + 1)
        if j is not None:
            w = np.exp(lw) * dx
            mean = np.sum(w * x, axis=-1)
            var = np.sum(w * (x - mean[:, None]) ** 2, axis=-1)
            live = ~dead
            out_mean[live, j] = mean[live]
            out_var[live, j] = var[live]
            for lb, v in phi_vals.items():
                pm = np.sum(w * v, axis=-1)
                pm2 = np.sum(w * v * v, axis=-1)
                out_phi[lb][live, j] = pm[live]
                out_phi2[lb][live, j] = pm2[live]
    return DiffusionEnsemble(grid.t0 + ks * grid.dt, out_mean, out_var,
                             out_phi, out_phi2, list(np.flatnonzero(dead)))


# ---------------------------------------------------------------------------
# classical limit oracle


def classical_sde_oracle(spec: LindbladSpec, y0: float, grid: TimeGrid,
                         rng: RngStream) -> np.ndarray:
    """Euler-Maruyama path of dY = U(Y) dt + V(Y) dB, all node values."""
    noise = sample_noise(grid, rng)
    y = np.empty(grid.n_steps + 1)
    y[0] = y0
    for k in range(grid.n_steps):
        yk = y[k]
        u = float(spec.U(np.asarray([yk]))[0])
        v = float(np.asarray(spec.V(np.asarray([yk])))[0])
        if v < 0.0:
            raise ConfigError("dissipation V must be nonnegative")
        y[k + 1] = yk + u * grid.dt + v * noise.increments[k]
    return y


def classical_sde_batch(spec: LindbladSpec, y0: float, grid: TimeGrid,
                        base_rng: RngStream, n_paths: int) -> np.ndarray:
    """Vectorized Euler-Maruyama ensemble, shape (n_paths, n_steps+1)."""
    noise = noise_matrix(grid, base_rng, n_paths)
    y = np.empty((n_paths, grid.n_steps + 1))
    y[:, 0] = y0
    for k in range(grid.n_steps):
        yk = y[:, k]
        u = np.broadcast_to(np.asarray(spec.U(yk), dtype=float), yk.shape)
        v = np.broadcast_to(np.asarray(spec.V(yk), dtype=float), yk.shape)
        if np.any(v < 0.0):
            raise ConfigError("dissipation V must be nonnegative")
        y[:, k + 1] = yk + u * grid.dt + v * noise[:, k]
    return y


# ---------------------------------------------------------------------------
# strong-measurement sweep


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    observable: str
    estimate: float
    std_err: float
    reference: float
    abs_error: float


@dataclass(frozen=True)
class SweepReport:
    t_eval: float
    n_paths: int
    rows: list

    def by_observable(self, label: str) -> list:
        return [r for r in self.rows if r.observable == label]

    def to_csv(self, path_or_buf) -> None:
        lines = [
            "# strong-measurement sweep: per-gamma ensemble estimates at "
            f"t={self.t_eval:.17g} over {self.n_paths} paths",
            "# estimate/std_err are Monte-Carlo mean and standard error;",
            "# reference is the gamma-independent classical-limit value",
            "gamma,observable,estimate,std_err,reference,abs_error",
        ]
        for r in self.rows:
            lines.append(
                f"{r.gamma:.17g},{r.observable},{r.estimate:.17g},"
                f"{r.std_err:.17g},{r.reference:.17g},{r.abs_error:.17g}"
            )
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)


def _mean_se_masked(values: np.ndarray) -> tuple[float, float]:
    v = values[np.isfinite(values)]
    n = v.size
    if n < 2:
        raise MeasureDiedError("too few surviving paths for an estimate")
    mean = fsum(v) / n
    var = fsum((v - mean) ** 2) / (n - 1)
    return mean, float(np.sqrt(var / n))


def strong_limit_sweep(mu0: GridMeasure, grid: TimeGrid, gammas,
                       observables, base_rng: RngStream, n_paths: int,
                       *, D: Optional[float] = None,
                       spec: Optional[LindbladSpec] = None,
                       references: Optional[dict] = None) -> SweepReport:
    """Ensemble study of measure concentration as gamma grows.

    For each gamma (same noise streams across the sweep, so columns are
    directly comparable) and each observable phi, reports three rows:

    * ``E[mu[phi]]``: ensemble mean of the measure moment;
    * ``E[mu[phi]^2]``: ensemble mean of its square, the estimate whose
      classical-limit reference is E[phi(Y_t)^2];
    * ``proxy[phi]``: concentration proxy E[mu[phi^2] - mu[phi]^2],
      which vanishes as the measure collapses (reference 0).

    references maps row labels to exact values; missing entries fall
    back to a Monte-Carlo run of the classical SDE on fresh streams.
    """
    gammas = list(gammas)
    if not gammas:
        raise ConfigError("at least one gamma required")
    refs = dict(references or {})
    labels = []
    for phi in observables:
        lb = getattr(phi, "label", getattr(phi, "__name__", repr(phi)))
        labels.append((lb, phi))
    needed = []
    for lb, _ in labels:
        for key in (f"E[mu[{lb}]]", f"E[mu[{lb}]^2]"):
            if key not in refs:
                needed.append((lb, key))
    if needed:
        s = spec if spec is not None else _pure_diffusion_spec(float(D))
        # classical endpoint sample from mu0-distributed starts
        gen = RngStream(base_rng.seed, 2**32).generator()
        from .measure import sample_nodes
        y0s = sample_nodes(renormalize(mu0), gen, size=max(4 * n_paths, 4000))
        ref_grid = grid
        y = np.empty_like(y0s)
        # one long vectorized Euler pass with common increments per path
        paths = y0s.size
        inc = gen.standard_normal((paths, ref_grid.n_steps)) * np.sqrt(ref_grid.dt)
        y[:] = y0s
        for k in range(ref_grid.n_steps):
            u = np.broadcast_to(np.asarray(s.U(y), dtype=float), y.shape)
            v = np.broadcast_to(np.asarray(s.V(y), dtype=float), y.shape)
            y = y + u * ref_grid.dt + v * inc[:, k]
        for lb, phi in labels:
            vals = np.asarray(phi(y), dtype=float)
            for key, data in ((f"E[mu[{lb}]]", vals),
                              (f"E[mu[{lb}]^2]", vals * vals)):
                if key not in refs:
                    refs[key] = fsum(data) / data.size
    rows = []
    t_eval = grid.t_end
    for g in gammas:
        cfg = MonitoredDiffusionConfig(gamma=float(g), mu0=mu0, grid=grid,
                                       rng=base_rng, D=D, spec=spec)
        ens = diffusion_batch(cfg, n_paths, base_rng,
                              record_times=[t_eval],
                              observables=[phi for _, phi in labels])
        for lb, phi in labels:
            pm = ens.phi_mean[lb][:, -1]
            pm2 = ens.phi_sq[lb][:, -1]
            est, se = _mean_se_masked(pm)
            ref = float(refs[f"E[mu[{lb}]]"])
            rows.append(SweepRow(float(g), f"E[mu[{lb}]]", est, se, ref,
                                 abs(est - ref)))
            est2, se2 = _mean_se_masked(pm * pm)
            ref2 = float(refs[f"E[mu[{lb}]^2]"])
            rows.append(SweepRow(float(g), f"E[mu[{lb}]^2]", est2, se2, ref2,
                                 abs(est2 - ref2)))
            estp, sep = _mean_se_masked(pm2 - pm * pm)
            rows.append(SweepRow(float(g), f"proxy[{lb}]", estp, sep, 0.0,
                                 abs(estp)))
    return SweepReport(t_eval, n_paths, rows)


# ---------------------------------------------------------------------------
# separated two-point kernel


def separated_kernel(sigma0: Callable[[np.ndarray], np.ndarray],
                     mu: GridMeasure, gamma: float, t: float) -> KernelSnapshot:
    """Assemble rho(x, y) = sigma0((x-y)/2) exp(-gamma^2 (x-y)^2 t / 2) mu((x+y)/2).

    The off-diagonal profile sigma0 must satisfy sigma0(0) = 1 so the
    kernel diagonal equals the measure density.  The kernel is built on
    the even-index subgrid of mu's grid, which puts every midpoint
    (x+y)/2 exactly on an original node - no interpolation.
    """
    s00 = complex(sigma0(np.asarray([0.0]))[0])
    if abs(s00 - 1.0) > 1e-12:
        raise ConfigError(f"sigma0(0) must equal 1, got {s00!r}")
    if t < 0.0:
        raise ConfigError(f"t must be nonnegative, got {t}")
    x_sub = mu.x[::2]
    n_sub = x_sub.size
    if n_sub < 3:
        raise ConfigError("measure grid too small for a kernel subgrid")
    i = np.arange(n_sub)
    u = 0.5 * (x_sub[:, None] - x_sub[None, :])
    sig = np.asarray(sigma0(u), dtype=complex)
    mid_lw = mu.log_weights[i[:, None] + i[None, :]]
    with np.errstate(divide="ignore"):
        lm = np.log(np.abs(sig)) - 2.0 * gamma**2 * u * u * t + mid_lw
    ph = np.angle(sig)
    return KernelSnapshot(x_sub, x_sub, lm, ph, t)


def separated_kernel_residual(sigma0, cfg: MonitoredDiffusionConfig,
                              n_steps_probe: Optional[int] = None) -> float:
    """Mean per-step defect of the separated kernel in the two-point equation.

    Simulates the monitored diffusion once with cfg, assembles the
    separated kernel at consecutive steps, and measures how well the
    increments satisfy

        d rho = D/2 (dx+dy)^2 rho dt - gamma^2/2 (x-y)^2 rho dt
                + gamma (x+y-2<X>) rho dW

    with the transport term evaluated by central differences on the
    kernel subgrid.  The Ito correction makes each step's defect O(dt),
    so the returned mean sup-norm defect decays linearly under dt
    halving.
    """
    if cfg.D is None:
        raise ConfigError("separated-kernel residual needs the drift-free "
                          "diffusion form (set D, not spec)")
    grid = cfg.grid
    n_probe = grid.n_steps if n_steps_probe is None else min(n_steps_probe,
                                                             grid.n_steps)
    op = cfg.operator()
    op.check_stability(grid.dt)
    noise = sample_noise(grid, cfg.rng)
    x, dx = cfg.mu0.x, cfg.mu0.dx
    two_gamma = 2.0 * cfg.gamma
    lw = cfg.mu0.log_weights
    gamma = cfg.gamma
    D = float(cfg.D)
    h = 2.0 * dx  # kernel subgrid spacing
    sup_defects = []
    t_k = 0.0
    mu_k = cfg.mu0
    rho_k = separated_kernel(sigma0, mu_k, gamma, t_k)
    xs = rho_k.x
    XX = xs[:, None]
    YY = xs[None, :]
    damp = (XX - YY) ** 2
    grow = XX + YY
    for k in range(n_probe):
        dW = noise.increments[k]
        w = np.exp(lw) * dx
        m_k = float(np.sum(w * x))
        lw, _, _, log_total = _generator_then_monitor(
            lw, op, x, dx, grid.dt, dW, two_gamma)
        if np.isneginf(log_total):
            raise MeasureDiedError("measure died during residual probe")
        t_next = (k + 1) * grid.dt
        mu_next = GridMeasure(cfg.mu0.x_min, dx, lw, normalized=True)
        rho_next = separated_kernel(sigma0, mu_next, gamma, t_next)
        vk = rho_k.values
        vnext = rho_next.values
        transport = (
            vk[2:, 1:-1] - 2.0 * vk[1:-1, 1:-1] + vk[:-2, 1:-1]
            + vk[1:-1, 2:] - 2.0 * vk[1:-1, 1:-1] + vk[1:-1, :-2]
            + 2.0 * (vk[2:, 2:] - vk[2:, :-2] - vk[:-2, 2:] + vk[:-2, :-2])
            / 4.0
        ) / (h * h)
        rhs = (
            0.5 * D * transport * grid.dt
            - 0.5 * gamma**2 * damp[1:-1, 1:-1] * vk[1:-1, 1:-1] * grid.dt
            + gamma * (grow[1:-1, 1:-1] - 2.0 * m_k) * vk[1:-1, 1:-1] * dW
        )
        defect = (vnext[1:-1, 1:-1] - vk[1:-1, 1:-1]) - rhs
        sup_defects.append(float(np.max(np.abs(defect))))
        rho_k = rho_next
    return float(np.mean(sup_defects))
