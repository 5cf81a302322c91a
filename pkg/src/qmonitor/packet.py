"""Collapsed-packet dynamics and the classical Langevin crossover.

Once monitoring has collapsed the state to a narrow Gaussian packet,
three stochastic variables carry all the physics: the packet centre
xbar, its velocity vbar, and a complex width parameter a (envelope
exp(-a (x - xbar)^2), Re a > 0).  The width obeys a deterministic
Riccati flow with a unique attracting fixed point a_infinity; centre
and velocity obey coupled SDEs whose noise coefficients are set by a.
In the double-scaling regime (omega -> infinity at fixed epsilon =
(hbar gamma / mass)^2) the centre SDE degenerates to the classical
Langevin equation

    dx = v dt,   dv = -V'(x)/mass dt + sqrt(epsilon) dW,

which this module also integrates directly, together with closed-form
statistics for the harmonic case used as oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, IntegrationError
from .noise import NoisePath, RngStream, TimeGrid, noise_matrix, sample_noise

__all__ = [
    "PhysicalScales",
    "Potential",
    "GaussianPacket",
    "PacketDispersions",
    "StepFlags",
    "a_drift",
    "a_infinity",
    "packet_step",
    "packet_dispersions",
    "simulate_packet",
    "PacketPath",
    "packet_batch",
    "PacketEnsemble",
    "langevin_step",
    "simulate_langevin",
    "langevin_batch",
    "langevin_harmonic_exact",
    "variance_closed_form",
    "variance_small_time",
    "variance_large_time",
    "double_scaling_study",
    "DoubleScalingRow",
    "DoubleScalingReport",
]


@dataclass(frozen=True)
class PhysicalScales:
    """Unit system (hbar, mass, gamma) and the derived collapse scales.

    ell is the stationary packet length, omega the internal frequency
    at which packet and monitoring effects balance, epsilon the
    velocity-diffusion constant surviving the classical limit:

        ell^4 = hbar / (mass gamma^2)
        omega^2 = hbar gamma^2 / mass
        epsilon = (hbar gamma / mass)^2

    so that omega ell^2 = hbar / mass, gamma ell^2 = sqrt(omega) ell
    and epsilon = omega^3 ell^2.
    """

    hbar: float
    mass: float
    gamma: float

    def __post_init__(self):
        for name in ("hbar", "mass", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ConfigError(f"{name} must be positive and finite, got {v}")

    @property
    def ell(self) -> float:
        return (self.hbar / (self.mass * self.gamma**2)) ** 0.25

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.hbar * self.gamma**2 / self.mass))

    @property
    def epsilon(self) -> float:
        return (self.hbar * self.gamma / self.mass) ** 2

    @classmethod
    def from_omega_ell(cls, omega: float, ell: float,
                       mass: float = 1.0) -> "PhysicalScales":
        """Scales with prescribed (omega, ell) at the given mass."""
        if omega <= 0.0 or ell <= 0.0:
            raise ConfigError("omega and ell must be positive")
        hbar = mass * omega * ell * ell
        gamma = float(np.sqrt(omega)) / ell
        return cls(hbar=hbar, mass=mass, gamma=gamma)


@dataclass(frozen=True)
class Potential:
    """External potential with the derivatives the packet flow needs.

    All callables are vectorized in x.  dddV may be None, meaning
    identically zero (e.g. harmonic); the cubic validity flag is then
    trivially satisfied.
    """

    V: Callable[[np.ndarray], np.ndarray]
    dV: Callable[[np.ndarray], np.ndarray]
    ddV: Callable[[np.ndarray], np.ndarray]
    dddV: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "potential"

    @classmethod
    def harmonic(cls, Omega: float, mass: float = 1.0) -> "Potential":
        if Omega < 0.0:
            raise ConfigError(f"Omega must be >= 0, got {Omega}")
        k = mass * Omega * Omega
        return cls(V=lambda x: 0.5 * k * x * x,
                   dV=lambda x: k * x,
                   ddV=lambda x: np.full_like(np.asarray(x, dtype=float), k),
                   dddV=None,
                   label=f"harmonic(Omega={Omega:g})")

    @classmethod
    def free(cls) -> "Potential":
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        return cls(V=zero, dV=zero, ddV=zero, dddV=None, label="free")

    def check_derivatives(self, points: np.ndarray, rtol: float = 1e-4,
                          h: float = 1e-5) -> None:
        """Spot-check dV and ddV against central differences of V."""
        pts = np.asarray(points, dtype=float)
        fd1 = (self.V(pts + h) - self.V(pts - h)) / (2.0 * h)
        fd2 = (self.V(pts + h) - 2.0 * self.V(pts) + self.V(pts - h)) / (h * h)
        scale1 = np.maximum(np.abs(fd1), 1.0)
        scale2 = np.maximum(np.abs(fd2), 1.0)
        if np.any(np.abs(fd1 - self.dV(pts)) > rtol * scale1):
            raise ConfigError("dV disagrees with a finite difference of V")
        if np.any(np.abs(fd2 - self.ddV(pts)) > rtol * scale2):
            raise ConfigError("ddV disagrees with a finite difference of V")


@dataclass(frozen=True)
class GaussianPacket:
    """Packet state: centre xbar, velocity vbar, complex width a, time.

    The envelope is exp(-a (x - xbar)^2); Re a > 0 is required for
    normalizability.
    """

    xbar: float
    vbar: float
    a: complex
    time: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.a.real) or not np.isfinite(self.a.imag):
            raise ConfigError(f"width parameter must be finite, got {self.a}")
        if self.a.real <= 0.0:
            raise ConfigError(
                f"width parameter needs Re(a) > 0, got Re(a) = {self.a.real}")
        if not (np.isfinite(self.xbar) and np.isfinite(self.vbar)):
            raise ConfigError("packet centre and velocity must be finite")


def a_drift(a: complex, scales: PhysicalScales, ddv: float) -> complex:
    """Deterministic width flow: gamma^2 - (2i hbar / mass) a^2 + i ddv / (2 hbar)."""
    return (scales.gamma**2
            - 2.0j * scales.hbar / scales.mass * a * a
            + 0.5j * ddv / scales.hbar)


def a_infinity(scales: PhysicalScales, ddv: float = 0.0) -> complex:
    """Attracting fixed point of the width flow at local curvature ddv.

    Solves a_drift(a) = 0 on the Re(a) > 0 branch.  For ddv = 0 this is
    (1 - i) / (2 ell^2) * ... explicitly (0.5 - 0.5i) ell^-2; a positive
    curvature rotates the root toward the real axis.
    """
    rhs = (scales.gamma**2 + 0.5j * ddv / scales.hbar) * scales.mass / (
        2.0j * scales.hbar)
    root = complex(np.sqrt(complex(rhs)))
    if root.real < 0.0:
        root = -root
    if root.real <= 0.0:
        raise IntegrationError(
            f"width fixed point has no Re > 0 branch for ddv = {ddv}")
    return root


class PacketDispersions(NamedTuple):
    """Packet spreads: calibrated values plus the raw envelope moments.

    sigma_x_raw = 1 / (2 sqrt(Re a)) and sigma_v_raw =
    (hbar/mass) |a| / sqrt(Re a) are the bare second-moment widths of
    the envelope; the calibrated pair rescales them so that at the
    free-space fixed point sigma_x = 2**-0.25 ell, sigma_v =
    2**-0.75 omega ell and sigma_v / sigma_x = omega / sqrt(2).
    """

    sigma_x: float
    sigma_v: float
    sigma_x_raw: float
    sigma_v_raw: float


def packet_dispersions(packet: GaussianPacket,
                       scales: PhysicalScales) -> PacketDispersions:
    ar = packet.a.real
    sigma_x_raw = 1.0 / (2.0 * np.sqrt(ar))
    sigma_v_raw = (scales.hbar / scales.mass) * abs(packet.a) / np.sqrt(ar)
    return PacketDispersions(sigma_x=2.0**0.25 * sigma_x_raw,
                             sigma_v=2.0**-0.75 * sigma_v_raw,
                             sigma_x_raw=float(sigma_x_raw),
                             sigma_v_raw=float(sigma_v_raw))


class StepFlags(NamedTuple):
    """Validity of the packet closure at the step's starting point.

    curvature_ok: |V''(xbar)| < 0.1 hbar gamma^2 (potential curvature
    well below the collapse rate).  cubic_ok: ell |V'''(xbar)| <
    0.1 |V''(xbar)|, trivially true when dddV is None.
    """

    curvature_ok: bool
    cubic_ok: bool


def _flags_at(x, scales: PhysicalScales, potential: Potential):
    ddv = np.abs(np.asarray(potential.ddV(np.asarray(x, dtype=float)),
                            dtype=float))
    curvature_ok = ddv < 0.1 * scales.hbar * scales.gamma**2
    if potential.dddV is None:
        cubic_ok = np.ones_like(curvature_ok, dtype=bool)
    else:
        d3 = np.abs(np.asarray(potential.dddV(np.asarray(x, dtype=float)),
                               dtype=float))
        cubic_ok = scales.ell * d3 < 0.1 * ddv
    return curvature_ok, cubic_ok


def packet_step(packet: GaussianPacket, scales: PhysicalScales,
                potential: Potential, dt: float, dW: float):
    """One Euler step of the packet triple; returns (packet, StepFlags).

    The noise enters the centre with coefficient gamma / (2 Re a) and
    the velocity with -gamma hbar Im(a) / (mass Re a); at the fixed
    point these become sqrt(epsilon)/omega (vanishing in the classical
    limit) and +sqrt(epsilon) (the surviving Langevin kick).  A step
    that drives Re(a) <= 0 raises IntegrationError.
    """
    if dt <= 0.0 or not np.isfinite(dt):
        raise ConfigError(f"dt must be positive, got {dt}")
    x, v, a = packet.xbar, packet.vbar, packet.a
    cur_ok, cub_ok = _flags_at(x, scales, potential)
    flags = StepFlags(bool(cur_ok), bool(cub_ok))
    ddv = float(np.asarray(potential.ddV(np.asarray([x]))).reshape(-1)[0])
    dv = float(np.asarray(potential.dV(np.asarray([x]))).reshape(-1)[0])
    ar = a.real
    c_x = scales.gamma / (2.0 * ar)
    c_v = -scales.gamma * scales.hbar * a.imag / (scales.mass * ar)
    x_new = x + v * dt + c_x * dW
    v_new = v - dv / scales.mass * dt + c_v * dW
    a_new = a + a_drift(a, scales, ddv) * dt
    if not np.isfinite(a_new.real) or a_new.real <= 0.0:
        raise IntegrationError(
            "width parameter left the Re(a) > 0 half-plane; "
            "reduce dt or check the potential curvature scale")
    return GaussianPacket(float(x_new), float(v_new), a_new,
                          packet.time + dt), flags


@dataclass(frozen=True)
class PacketPath:
    """Recorded packet trajectory with per-step validity flags."""

    times: np.ndarray
    xbar: np.ndarray
    vbar: np.ndarray
    a: np.ndarray
    curvature_ok: np.ndarray
    cubic_ok: np.ndarray

    @property
    def all_valid(self) -> bool:
        return bool(np.all(self.curvature_ok) and np.all(self.cubic_ok))


def simulate_packet(x0: float, v0: float, scales: PhysicalScales,
                    potential: Potential, grid: TimeGrid, rng: RngStream,
                    a0: Optional[complex] = None) -> PacketPath:
    """Single packet trajectory; a0 defaults to the local fixed point."""
    noise = sample_noise(grid, rng)
    n = grid.n_steps
    if a0 is None:
        ddv0 = float(np.asarray(potential.ddV(np.asarray([x0]))).reshape(-1)[0])
        a0 = a_infinity(scales, ddv0)
    packet = GaussianPacket(x0, v0, complex(a0), grid.t0)
    xbar = np.empty(n + 1)
    vbar = np.empty(n + 1)
    avals = np.empty(n + 1, dtype=complex)
    cur = np.ones(n, dtype=bool)
    cub = np.ones(n, dtype=bool)
    xbar[0], vbar[0], avals[0] = packet.xbar, packet.vbar, packet.a
    for k in range(n):
        packet, flags = packet_step(packet, scales, potential, grid.dt,
                                    noise.increments[k])
        cur[k], cub[k] = flags
        xbar[k + 1], vbar[k + 1] = packet.xbar, packet.vbar
        avals[k + 1] = packet.a
    return PacketPath(grid.times(), xbar, vbar, avals, cur, cub)


@dataclass(frozen=True)
class PacketEnsemble:
    times: np.ndarray
    xbar: np.ndarray  # (n_paths, n_recorded)
    vbar: np.ndarray
    a_final: np.ndarray
    all_valid: np.ndarray  # (n_paths,) bool


def _record_ks(grid: TimeGrid, record_times):
    if record_times is None:
        return np.array([grid.n_steps], dtype=int)
    ks = np.asarray(sorted({grid.index_at(t) for t in record_times}), dtype=int)
    if np.any(ks == 0):
        raise ConfigError("record times must be after the grid start")
    return ks


def packet_batch(x0: float, v0: float, scales: PhysicalScales,
                 potential: Potential, grid: TimeGrid, base_rng: RngStream,
                 n_paths: int,
                 record_times: Optional[Sequence[float]] = None,
                 a0: Optional[complex] = None) -> PacketEnsemble:
    """Vectorized packet ensemble on streams (seed, 0..n_paths-1)."""
    ks = _record_ks(grid, record_times)
    rec_pos = {int(k): j for j, k in enumerate(ks)}
    noise = noise_matrix(grid, base_rng, n_paths)
    if a0 is None:
        ddv0 = float(np.asarray(potential.ddV(np.asarray([x0]))).reshape(-1)[0])
        a0 = a_infinity(scales, ddv0)
    if complex(a0).real <= 0.0:
        raise ConfigError("a0 needs Re(a0) > 0")
    x = np.full(n_paths, float(x0))
    v = np.full(n_paths, float(v0))
    a = np.full(n_paths, complex(a0))
    valid = np.ones(n_paths, dtype=bool)
    R = ks.size
    out_x = np.empty((n_paths, R))
    out_v = np.empty((n_paths, R))
    g, hb, ms = scales.gamma, scales.hbar, scales.mass
    for k in range(grid.n_steps):
        cur_ok, cub_ok = _flags_at(x, scales, potential)
        valid &= cur_ok & cub_ok
        ddv = np.asarray(potential.ddV(x), dtype=float)
        dv = np.asarray(potential.dV(x), dtype=float)
        ar = a.real
        c_x = g / (2.0 * ar)
        c_v = -g * hb * a.imag / (ms * ar)
        dW = noise[:, k]
        x = x + v * grid.dt + c_x * dW
        v = v - dv / ms * grid.dt + c_v * dW
        a = a + (g * g - 2.0j * hb / ms * a * a + 0.5j * ddv / hb) * grid.dt
        if np.any(a.real <= 0.0) or not np.all(np.isfinite(a.real)):
            raise IntegrationError(
                "width parameter left the Re(a) > 0 half-plane in a batch path")
        j = rec_pos.get(k + 1)
        if j is not None:
            out_x[:, j] = x
            out_v[:, j] = v
    return PacketEnsemble(grid.t0 + ks * grid.dt, out_x, out_v, a.copy(), valid)


# ---------------------------------------------------------------------------
# classical Langevin dynamics


def langevin_step(x: float, v: float, potential: Potential, eps: float,
                  dt: float, dW: float, mass: float = 1.0):
    """Semi-explicit Euler step: position uses the pre-step velocity."""
    x_new = x + v * dt
    v_new = v - float(np.asarray(potential.dV(np.asarray([x])))
                      .reshape(-1)[0]) / mass * dt + np.sqrt(eps) * dW
    return x_new, v_new


def simulate_langevin(x0: float, v0: float, potential: Potential, eps: float,
                      grid: TimeGrid, rng: RngStream, mass: float = 1.0):
    """Langevin trajectory; returns (times, x, v) node arrays."""
    if eps < 0.0:
        raise ConfigError(f"epsilon must be >= 0, got {eps}")
    noise = sample_noise(grid, rng)
    n = grid.n_steps
    x = np.empty(n + 1)
    v = np.empty(n + 1)
    x[0], v[0] = x0, v0
    root = np.sqrt(eps)
    for k in range(n):
        x[k + 1] = x[k] + v[k] * grid.dt
        force = float(np.asarray(potential.dV(np.asarray([x[k]])))
                      .reshape(-1)[0])
        v[k + 1] = v[k] - force / mass * grid.dt + root * noise.increments[k]
    return grid.times(), x, v


def langevin_batch(x0: float, v0: float, potential: Potential, eps: float,
                   grid: TimeGrid, base_rng: RngStream, n_paths: int,
                   record_times: Optional[Sequence[float]] = None,
                   mass: float = 1.0, stream_offset: int = 0):
    """Vectorized Langevin ensemble; returns (times, x, v) with (P, R) data."""
    if eps < 0.0:
        raise ConfigError(f"epsilon must be >= 0, got {eps}")
    ks = _record_ks(grid, record_times)
    rec_pos = {int(k): j for j, k in enumerate(ks)}
    noise = noise_matrix(grid, base_rng, n_paths, stream_offset)
    x = np.full(n_paths, float(x0))
    v = np.full(n_paths, float(v0))
    R = ks.size
    out_x = np.empty((n_paths, R))
    out_v = np.empty((n_paths, R))
    root = np.sqrt(eps)
    for k in range(grid.n_steps):
        x_new = x + v * grid.dt
        force = np.asarray(potential.dV(x), dtype=float)
        v = v - force / mass * grid.dt + root * noise[:, k]
        x = x_new
        j = rec_pos.get(k + 1)
        if j is not None:
            out_x[:, j] = x
            out_v[:, j] = v
    return grid.t0 + ks * grid.dt, out_x, out_v


def langevin_harmonic_exact(x0: float, v0: float, Omega: float, eps: float,
                            noise: NoisePath):
    """Exact harmonic-oscillator response to the given increments.

    Propagates the oscillator exactly between noise nodes with the
    stochastic convolution evaluated at the left endpoints,

        x_k = x0 cos(W t_k) + (v0/W) sin(W t_k)
              + (sqrt(eps)/W) sum_{j<k} sin(W (t_k - t_j)) dW_j,

    expanded by the angle-difference identities into two cumulative
    sums, so the whole path costs O(n).  Matched-noise Euler paths
    converge to this at strong order 1.
    """
    if Omega <= 0.0:
        raise ConfigError(f"Omega must be positive, got {Omega}")
    if eps < 0.0:
        raise ConfigError(f"epsilon must be >= 0, got {eps}")
    grid = noise.grid
    t = grid.times() - grid.t0
    ct = np.cos(Omega * t)
    st = np.sin(Omega * t)
    # cumulative sums of cos/sin(W t_j) dW_j over j < k
    C = np.zeros(grid.n_steps + 1)
    S = np.zeros(grid.n_steps + 1)
    np.cumsum(ct[:-1] * noise.increments, out=C[1:])
    np.cumsum(st[:-1] * noise.increments, out=S[1:])
    root = np.sqrt(eps)
    x = x0 * ct + (v0 / Omega) * st + (root / Omega) * (st * C - ct * S)
    v = -x0 * Omega * st + v0 * ct + root * (ct * C + st * S)
    return grid.times(), x, v


def variance_closed_form(t, Omega: float, eps: float):
    """Position variance of the harmonic Langevin path started at rest.

    Var x(t) = (eps / Omega^2) (t/2 - sin(2 Omega t) / (4 Omega));
    Omega = 0 gives the free-particle limit eps t^3 / 3.
    """
    t = np.asarray(t, dtype=float)
    if Omega < 0.0:
        raise ConfigError(f"Omega must be >= 0, got {Omega}")
    if Omega == 0.0:
        return eps * t**3 / 3.0
    return (eps / Omega**2) * (0.5 * t - np.sin(2.0 * Omega * t)
                               / (4.0 * Omega))


def variance_small_time(t, eps: float):
    """Small-time asymptote eps t^3 / 3 (valid for Omega t << 1)."""
    t = np.asarray(t, dtype=float)
    return eps * t**3 / 3.0


def variance_large_time(t, Omega: float, eps: float):
    """Large-time asymptote eps t / (2 Omega^2)."""
    if Omega <= 0.0:
        raise ConfigError(f"Omega must be positive, got {Omega}")
    t = np.asarray(t, dtype=float)
    return eps * t / (2.0 * Omega**2)


# ---------------------------------------------------------------------------
# double-scaling study: packet dynamics versus the Langevin limit


@dataclass(frozen=True)
class DoubleScalingRow:
    omega: float
    ell: float
    dt: float
    sigma_x_pred: float
    mean_packet: float
    var_packet: float
    mean_exact: float
    var_exact: float
    ks_stat: float
    ks_critical: float
    var_excess: float

    @property
    def ks_pass(self) -> bool:
        return self.ks_stat <= self.ks_critical


@dataclass(frozen=True)
class DoubleScalingReport:
    Omega: float
    eps: float
    x0: float
    v0: float
    t_final: float
    n_packet: int
    n_reference: int
    rows: list

    def to_csv(self, path_or_buf) -> None:
        lines = [
            "# double-scaling study: packet endpoint law vs exact Langevin law",
            f"# Omega={self.Omega:.17g} eps={self.eps:.17g} x0={self.x0:.17g} "
            f"v0={self.v0:.17g} t_final={self.t_final:.17g}",
            f"# n_packet={self.n_packet} n_reference={self.n_reference}",
            "omega,ell,dt,sigma_x_pred,mean_packet,var_packet,mean_exact,"
            "var_exact,ks_stat,ks_critical,var_excess",
        ]
        for r in self.rows:
            lines.append(",".join(f"{v:.17g}" for v in (
                r.omega, r.ell, r.dt, r.sigma_x_pred, r.mean_packet,
                r.var_packet, r.mean_exact, r.var_exact, r.ks_stat,
                r.ks_critical, r.var_excess)))
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)


def _foreach_fine_chunk(base_rng: RngStream, n_paths: int, n_fine: int,
                        dt_fine: float, chunk_fine: int, consume) -> None:
    """Stream the shared fine increments to consume(start_index, block).

    Per-path generators are recreated from (seed, path) on every call,
    so repeated passes see the identical Brownian refinement no matter
    how the chunking falls.
    """
    gens = [base_rng.with_stream(i).generator() for i in range(n_paths)]
    root = np.sqrt(dt_fine)
    done = 0
    while done < n_fine:
        take = min(chunk_fine, n_fine - done)
        block = np.empty((n_paths, take))
        for i, g in enumerate(gens):
            block[i] = g.standard_normal(take)
        block *= root
        consume(done, block)
        done += take


def double_scaling_study(omegas, base_rng: RngStream, *, eps: float = 1.0,
                         Omega: float = 1.0, x0: float = 1.0, v0: float = 0.0,
                         t_final: float = 1.0, n_paths: int = 2000,
                         dt_max_factor: float = 1e-2) -> DoubleScalingReport:
    """Packet endpoint statistics against the exact Langevin law per omega.

    For each omega the scales are built from (omega, ell) with ell =
    sqrt(eps / omega^3), which holds epsilon fixed while the internal
    frequency grows.  Every omega is driven by the same underlying
    Brownian paths: increments are generated on a common refinement
    (step count the lcm of the per-omega counts) and aggregated to each
    omega's grid, and the comparison sample is the exact harmonic
    response to those same paths.  The coupling removes the common
    sampling noise, so the reported KS distances isolate the genuine
    packet-vs-Langevin gap per omega.  The width flow must be resolved:
    each omega runs at dt <= dt_max_factor / omega, and a coarser
    request is a configuration error.
    """
    from .stats import ks_two_sample

    omegas = [float(w) for w in omegas]
    if not omegas or any(w <= 0.0 for w in omegas):
        raise ConfigError("omegas must be positive")
    if dt_max_factor > 1e-2:
        raise ConfigError(
            f"dt_max_factor must be <= 1e-2 to resolve the width flow, "
            f"got {dt_max_factor}")
    if t_final <= 0.0:
        raise ConfigError(f"t_final must be positive, got {t_final}")
    if n_paths < 100:
        raise ConfigError(f"n_paths must be >= 100, got {n_paths}")
    import math

    n_steps_w = [int(np.ceil(w * t_final / dt_max_factor)) for w in omegas]
    n_fine = math.lcm(*n_steps_w)
    if n_fine > 2_000_000:
        raise ConfigError(
            f"omegas {omegas} need a {n_fine}-step common refinement; "
            "choose omegas with commensurate step counts")
    dt_fine = t_final / n_fine
    chunk_fine = max(1, (1 << 21) // n_paths)
    potential = Potential.harmonic(Omega)
    mean_exact = x0 * np.cos(Omega * t_final)
    if Omega > 0.0:
        mean_exact += (v0 / Omega) * np.sin(Omega * t_final)
    var_exact = float(variance_closed_form(t_final, Omega, eps))

    # exact harmonic response to the shared fine increments (left-point
    # stochastic convolution, like langevin_harmonic_exact)
    C_T = np.zeros(n_paths)
    S_T = np.zeros(n_paths)

    def accumulate_reference(start, block):
        j = start + np.arange(block.shape[1])
        tj = j * dt_fine
        C_T[:] += block @ np.cos(Omega * tj)
        S_T[:] += block @ np.sin(Omega * tj)

    _foreach_fine_chunk(base_rng, n_paths, n_fine, dt_fine, chunk_fine,
                        accumulate_reference)
    root = np.sqrt(eps)
    ct, st = np.cos(Omega * t_final), np.sin(Omega * t_final)
    reference = (x0 * ct + (v0 / Omega) * st
                 + (root / Omega) * (st * C_T - ct * S_T))

    rows = []
    for w, n_w in zip(omegas, n_steps_w):
        ell = float(np.sqrt(eps / w**3))
        scales = PhysicalScales.from_omega_ell(w, ell)
        k_agg = n_fine // n_w
        dt = t_final / n_w
        ddv = Omega * Omega  # mass 1 harmonic curvature
        a = a_infinity(scales, ddv)
        g, hb, ms = scales.gamma, scales.hbar, scales.mass
        x = np.full(n_paths, float(x0))
        v = np.full(n_paths, float(v0))
        state = {"a": complex(a)}

        def step_chunk(start, block, *, _x=x, _v=v, _state=state, _dt=dt,
                       _k=k_agg, _scales=scales, _ddv=ddv):
            if block.shape[1] % _k:
                raise ConfigError("fine chunk does not align with the "
                                  "aggregation factor")
            coarse = block.reshape(n_paths, -1, _k).sum(axis=2)
            a_loc = _state["a"]
            for j in range(coarse.shape[1]):
                ar = a_loc.real
                c_x = _scales.gamma / (2.0 * ar)
                c_v = (-_scales.gamma * _scales.hbar * a_loc.imag
                       / (_scales.mass * ar))
                dW = coarse[:, j]
                x_new = _x + _v * _dt + c_x * dW
                _v += (-(_ddv * _x) / _scales.mass * _dt + c_v * dW)
                _x[:] = x_new
                a_loc = a_loc + a_drift(a_loc, _scales, _ddv) * _dt
                if not np.isfinite(a_loc.real) or a_loc.real <= 0.0:
                    raise IntegrationError(
                        "width parameter left the Re(a) > 0 half-plane")
            _state["a"] = a_loc

        # chunk size must carry whole coarse steps
        chunk = max(k_agg, (chunk_fine // k_agg) * k_agg)
        _foreach_fine_chunk(base_rng, n_paths, n_fine, dt_fine, chunk,
                            step_chunk)
        sample = x
        mean_p = float(np.mean(sample))
        var_p = float(np.var(sample, ddof=1))
        ks = ks_two_sample(sample, reference)
        rows.append(DoubleScalingRow(
            omega=w, ell=ell, dt=dt,
            sigma_x_pred=2.0**-0.25 * ell,
            mean_packet=mean_p, var_packet=var_p,
            mean_exact=float(mean_exact), var_exact=var_exact,
            ks_stat=ks.statistic, ks_critical=ks.critical,
            var_excess=var_p / var_exact - 1.0))
    return DoubleScalingReport(Omega, eps, x0, v0, t_final, n_paths,
                               n_paths, rows)
