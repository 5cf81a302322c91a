"""Probability measures on a uniform 1-d grid, stored as log-weights.

The measure is dmu(x) = exp(log_weights[i]) * dx at node x_i.  Working in
the log domain keeps Bayes-type reweighting stable when likelihood ratios
span hundreds of orders of magnitude; -inf marks a node with zero mass
and is a legal value throughout, while +inf and NaN never are.

Discrete priors (e.g. half the mass at -1 and half at +1) use the same
type: a two-node grid carries them without any special casing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConfigError, MeasureDiedError

#: Relative tolerance on total mass for a measure that claims normalization.
MASS_RTOL = 1e-10


def log_sum_exp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """log(sum(exp(a))) along an axis, safe for -inf entries.

    Implemented locally (max-shift form) so batched and single-measure
    code paths reduce in exactly the same floating-point order.
    """
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    # An all--inf slice must come out as -inf, not NaN.
    shift = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(a - shift), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = shift + np.log(s)
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Measure on the uniform grid x_i = x_min + i*dx, i = 0..n_points-1."""

    x_min: float
    dx: float
    log_weights: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        object.__setattr__(self, "log_weights", lw)
        if not np.isfinite(self.dx) or self.dx <= 0.0:
            raise ConfigError(f"dx must be positive and finite, got {self.dx}")
        if lw.ndim != 1 or lw.shape[0] < 2:
            raise ConfigError("log_weights must be 1-d with at least 2 nodes")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ConfigError("log_weights may contain -inf but never +inf or NaN")
        if self.normalized:
            total = float(np.exp(log_sum_exp(lw) + np.log(self.dx)))
            if not np.isclose(total, 1.0, rtol=MASS_RTOL, atol=0.0):
                raise ConfigError(
                    f"measure marked normalized but total mass is {total!r}"
                )

    @property
    def n_points(self) -> int:
        return self.log_weights.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    def masses(self) -> np.ndarray:
        """Node masses exp(log_weights)*dx."""
        return np.exp(self.log_weights) * self.dx

    # -- constructors -------------------------------------------------

    @classmethod
    def from_masses(cls, x_min: float, dx: float, masses) -> "GridMeasure":
        """Build a normalized measure from nonnegative node masses."""
        m = np.asarray(masses, dtype=float)
        if np.any(m < 0.0) or not np.all(np.isfinite(m)):
            raise ConfigError("masses must be finite and nonnegative")
        with np.errstate(divide="ignore"):
            lw = np.log(m) - np.log(dx)
        return renormalize(cls(x_min, dx, lw))

    @classmethod
    def gaussian(cls, mean: float, sigma: float, x_min: float, dx: float,
                 n_points: int) -> "GridMeasure":
        """Discretized N(mean, sigma^2), renormalized on the grid."""
        if sigma <= 0.0:
            raise ConfigError(f"sigma must be positive, got {sigma}")
        x = x_min + dx * np.arange(n_points)
        lw = -0.5 * ((x - mean) / sigma) ** 2
        return renormalize(cls(x_min, dx, lw))

    @classmethod
    def point_mass(cls, x0: float, x_min: float, dx: float,
                   n_points: int) -> "GridMeasure":
        """All mass on the grid node nearest x0."""
        i = int(round((x0 - x_min) / dx))
        if not (0 <= i < n_points):
            raise ConfigError(f"x0={x0} falls outside the grid")
        lw = np.full(n_points, -np.inf)
        lw[i] = -np.log(dx)
        return cls(x_min, dx, lw, normalized=True)

    @classmethod
    def two_atoms(cls, x_left: float = -1.0, x_right: float = 1.0,
                  p_left: float = 0.5) -> "GridMeasure":
        """Two-sided discrete prior p_left*delta(x_left) + (1-p_left)*delta(x_right)."""
        if not x_right > x_left:
            raise ConfigError("two_atoms needs x_right > x_left")
        if not 0.0 < p_left < 1.0:
            raise ConfigError(f"p_left must lie in (0, 1), got {p_left}")
        dx = x_right - x_left
        lw = np.log(np.array([p_left, 1.0 - p_left]) / dx)
        return cls(x_left, dx, lw, normalized=True)

    # -- unit conversion ----------------------------------------------

    def scaled(self, factor: float) -> "GridMeasure":
        """Pushforward under x -> factor*x (factor > 0), density rescaled."""
        if factor <= 0.0:
            raise ConfigError("scale factor must be positive")
        return GridMeasure(self.x_min * factor, self.dx * factor,
                           self.log_weights - np.log(factor), self.normalized)


def to_observable_units(mu: GridMeasure, gamma: float) -> GridMeasure:
    """Express a position-space measure in monitored-observable units.

    The monitoring output couples to alpha = 2*gamma*x, and all closed-form
    posterior identities are simplest in alpha.  This is the single
    conversion point between the two conventions.
    """
    return mu.scaled(2.0 * gamma)


def to_position_units(mu_alpha: GridMeasure, gamma: float) -> GridMeasure:
    """Inverse of :func:`to_observable_units`."""
    return mu_alpha.scaled(1.0 / (2.0 * gamma))


@dataclass(frozen=True)
class TestFunction:
    """A labelled observable phi(x), checked for boundedness on a grid.

    Registration scans the function over the grid it will be used on;
    anything non-finite there (poles, overflow) is rejected up front so
    moment code never sees it.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    label: str

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(x), dtype=float)


def register_test_function(evaluator, label: str, mu: GridMeasure) -> TestFunction:
    phi = TestFunction(evaluator, label)
    vals = phi(mu.x)
    if vals.shape != mu.x.shape:
        raise ConfigError(f"test function {label!r} must be vectorized over x")
    if not np.all(np.isfinite(vals)):
        raise ConfigError(f"test function {label!r} is unbounded on the grid")
    return phi


PhiLike = Union[TestFunction, Callable[[np.ndarray], np.ndarray]]


def _phi_values(mu: GridMeasure, phi: PhiLike) -> np.ndarray:
    vals = np.asarray(phi(mu.x), dtype=float)
    if not np.all(np.isfinite(vals)):
        label = getattr(phi, "label", getattr(phi, "__name__", "phi"))
        raise ConfigError(f"test function {label!r} is unbounded on the grid")
    return vals


def moment(mu: GridMeasure, phi: PhiLike) -> float:
    """Integral of phi against mu.  Rejects unnormalized measures."""
    if not mu.normalized:
        raise ConfigError("moment requires a normalized measure; renormalize first")
    return float(np.sum(mu.masses() * _phi_values(mu, phi)))


def connected_moment_x(mu: GridMeasure, phi: PhiLike) -> float:
    """mu[x*phi] - mu[x]*mu[phi], the covariance of x with phi(x)."""
    if not mu.normalized:
        raise ConfigError("connected_moment_x requires a normalized measure")
    w = mu.masses()
    vals = _phi_values(mu, phi)
    x = mu.x
    return float(np.sum(w * x * vals) - np.sum(w * x) * np.sum(w * vals))


def mean_and_variance(mu: GridMeasure) -> tuple[float, float]:
    if not mu.normalized:
        raise ConfigError("mean_and_variance requires a normalized measure")
    w = mu.masses()
    x = mu.x
    m = float(np.sum(w * x))
    v = float(np.sum(w * (x - m) ** 2))
    return m, v


def renormalize(mu: GridMeasure, return_deficit: bool = False):
    """Shift log-weights so the total mass is exactly one.

    The pre-shift relative mass deficit (total - 1) is available via
    ``return_deficit=True``; monitoring steps use it as a per-step
    consistency diagnostic.  A measure whose every node has reached
    -inf cannot be renormalized and raises MeasureDiedError.
    """
    log_total = float(log_sum_exp(mu.log_weights) + np.log(mu.dx))
    if log_total == -np.inf:
        raise MeasureDiedError(
            "measure died: all grid mass lost (grid truncation too aggressive "
            "or the state left the domain)"
        )
    out = GridMeasure(mu.x_min, mu.dx, mu.log_weights - log_total, normalized=True)
    if return_deficit:
        return out, float(np.expm1(log_total))
    return out


def sample_nodes(mu: GridMeasure, gen: np.random.Generator, size=None) -> np.ndarray:
    """Draw node values x_i with probabilities given by the node masses."""
    if not mu.normalized:
        raise ConfigError("sample_nodes requires a normalized measure")
    w = mu.masses()
    w = w / w.sum()  # kill the <= 1e-10 normalization slack for choice()
    return gen.choice(mu.x, p=w, size=size)


CSV_MEASURE_HEADER = (
    "# grid measure: columns x, weight\n"
    "# weight is the node mass (dimensionless); weights sum to 1\n"
    "# density at x equals weight / dx\n"
)


def measure_to_csv(mu: GridMeasure, path_or_buf) -> None:
    """Write the normalized measure as CSV with columns x, weight."""
    if not mu.normalized:
        raise ConfigError("only normalized measures are serialized")
    buf = io.StringIO()
    buf.write(CSV_MEASURE_HEADER)
    buf.write(f"# dx={mu.dx:.17g}\n")
    buf.write("x,weight\n")
    for xi, wi in zip(mu.x, mu.masses()):
        buf.write(f"{xi:.17g},{wi:.17g}\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)


def measure_from_csv(path_or_buf) -> GridMeasure:
    """Read back a measure written by :func:`measure_to_csv`."""
    if hasattr(path_or_buf, "read"):
        lines = path_or_buf.read().splitlines()
    else:
        with open(path_or_buf) as fh:
            lines = fh.read().splitlines()
    rows = [ln for ln in lines if ln and not ln.startswith("#")]
    if not rows or rows[0] != "x,weight":
        raise ConfigError("not a grid-measure CSV (missing 'x,weight' header)")
    data = np.array([[float(tok) for tok in ln.split(",")] for ln in rows[1:]])
    if data.shape[0] < 2:
        raise ConfigError("grid-measure CSV needs at least 2 nodes")
    x, w = data[:, 0], data[:, 1]
    dx = float(x[1] - x[0])
    if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=0.0):
        raise ConfigError("grid-measure CSV nodes are not uniformly spaced")
    return GridMeasure.from_masses(float(x[0]), dx, w)
