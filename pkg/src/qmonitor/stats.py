"""Ensemble reductions and statistical verification helpers.

Reductions go through math.fsum, so reported means and standard errors
are exactly rounded and independent of path ordering; the ensemble
runner always reduces in path-index order regardless of completion
order, which keeps multi-threaded runs byte-reproducible.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import fsum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.stats

from .errors import ConfigError, NumericalError
from .noise import RngStream

__all__ = [
    "KS_CONSTANT_1PCT",
    "MIN_KS_SAMPLES",
    "mean_fsum",
    "variance_fsum",
    "mean_and_se",
    "KsResult",
    "ks_two_sample",
    "ks_one_sample",
    "DriftEstimate",
    "martingale_drift",
    "OrderFit",
    "convergence_order_fit",
    "EnsembleReport",
    "run_ensemble",
]

# Asymptotic Kolmogorov-Smirnov critical constant at the 1% level:
# c(alpha) = sqrt(-ln(alpha/2)/2) = 1.628 for alpha = 0.01.
KS_CONSTANT_1PCT = 1.628
MIN_KS_SAMPLES = 100


def mean_fsum(values) -> float:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ConfigError("mean of an empty sample")
    return fsum(v) / v.size


def variance_fsum(values, ddof: int = 1) -> float:
    v = np.asarray(values, dtype=float).ravel()
    if v.size <= ddof:
        raise ConfigError(f"need more than {ddof} values for the variance")
    m = fsum(v) / v.size
    return fsum((v - m) ** 2) / (v.size - ddof)


def mean_and_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float).ravel()
    m = mean_fsum(v)
    if v.size < 2:
        return m, float("nan")
    return m, float(np.sqrt(variance_fsum(v) / v.size))


@dataclass(frozen=True)
class KsResult:
    """Kolmogorov-Smirnov distance with its 1% critical value."""

    statistic: float
    critical: float
    n: int
    m: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.statistic <= self.critical


def ks_two_sample(a, b) -> KsResult:
    """Two-sample KS statistic, critical value 1.628 sqrt((n+m)/(nm)).

    Both samples must hold at least 100 points for the asymptotic
    critical value to be meaningful.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    n, m = a.size, b.size
    if n < MIN_KS_SAMPLES or m < MIN_KS_SAMPLES:
        raise ConfigError(
            f"KS comparison needs >= {MIN_KS_SAMPLES} points per sample, "
            f"got {n} and {m}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ConfigError("KS samples must be finite")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / n
    cdf_b = np.searchsorted(b, pooled, side="right") / m
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    critical = KS_CONSTANT_1PCT * float(np.sqrt((n + m) / (n * m)))
    return KsResult(stat, critical, n, m)


def ks_one_sample(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> KsResult:
    """One-sample KS statistic against cdf, critical value 1.628/sqrt(n)."""
    s = np.sort(np.asarray(sample, dtype=float).ravel())
    n = s.size
    if n < MIN_KS_SAMPLES:
        raise ConfigError(
            f"KS test needs >= {MIN_KS_SAMPLES} points, got {n}")
    if not np.all(np.isfinite(s)):
        raise ConfigError("KS sample must be finite")
    f = np.asarray(cdf(s), dtype=float)
    if np.any(f < -1e-12) or np.any(f > 1.0 + 1e-12):
        raise ConfigError("cdf values must lie in [0, 1]")
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    stat = float(max(d_plus, d_minus))
    return KsResult(stat, KS_CONSTANT_1PCT / float(np.sqrt(n)), n)


@dataclass(frozen=True)
class DriftEstimate:
    """Ensemble-mean increment X_t - X_s with its standard error."""

    s: float
    t: float
    drift: float
    std_err: float

    @property
    def z_score(self) -> float:
        return self.drift / self.std_err


def martingale_drift(times, paths, pairs) -> list:
    """Increment drift estimates for per-path series at the given (s, t) pairs.

    paths has shape (n_paths, n_times) aligned with times; each pair
    (s, t) with s < t is snapped to the nearest recorded times and the
    ensemble mean of X_t - X_s is reported with its standard error.
    A martingale keeps every drift within a few SE of zero.
    """
    times = np.asarray(times, dtype=float)
    p = np.asarray(paths, dtype=float)
    if p.ndim != 2 or p.shape[1] != times.size:
        raise ConfigError("paths must be (n_paths, n_times) matching times")
    if p.shape[0] < 2:
        raise ConfigError("need at least two paths")
    out = []
    for s, t in pairs:
        if not s < t:
            raise ConfigError(f"pair needs s < t, got ({s}, {t})")
        i = int(np.argmin(np.abs(times - s)))
        j = int(np.argmin(np.abs(times - t)))
        if i == j:
            raise ConfigError(f"pair ({s}, {t}) maps to one recorded time")
        inc = p[:, j] - p[:, i]
        inc = inc[np.isfinite(inc)]
        if inc.size < 2:
            raise NumericalError("too few finite increments for a drift estimate")
        m, se = mean_and_se(inc)
        out.append(DriftEstimate(float(times[i]), float(times[j]), m, se))
    return out


@dataclass(frozen=True)
class OrderFit:
    """Least-squares slope of log(error) against log(dt) with 95% CI."""

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    residual_rms: float

    def __str__(self):
        return (f"order {self.slope:.3f} "
                f"(95% CI [{self.ci_low:.3f}, {self.ci_high:.3f}])")


def convergence_order_fit(dts, errors) -> OrderFit:
    """Fit error ~ C dt^p in log-log coordinates.

    Needs at least three distinct step sizes and strictly positive
    errors; an exactly zero error means the method is exact at that
    resolution and a power-law fit is meaningless.
    """
    dts = np.asarray(dts, dtype=float).ravel()
    errors = np.asarray(errors, dtype=float).ravel()
    if dts.size != errors.size:
        raise ConfigError("dts and errors must have equal length")
    if dts.size < 3:
        raise ConfigError("need at least three step sizes for an order fit")
    if np.unique(dts).size != dts.size or np.any(dts <= 0.0):
        raise ConfigError("step sizes must be positive and distinct")
    if np.any(errors <= 0.0):
        raise ConfigError(
            "errors must be strictly positive for a power-law fit "
            "(a zero error means the scheme is exact at that step)")
    x = np.log(dts)
    y = np.log(errors)
    xbar = x.mean()
    ybar = y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    rms = float(np.sqrt(np.mean(resid**2)))
    if dof > 0:
        se = float(np.sqrt(np.sum(resid**2) / dof / sxx))
        tcrit = float(scipy.stats.t.ppf(0.975, dof))
        lo, hi = slope - tcrit * se, slope + tcrit * se
    else:
        lo = hi = slope
    return OrderFit(slope, intercept, lo, hi, rms)


@dataclass(frozen=True)
class EnsembleReport:
    """Outcome of a per-path ensemble run.

    values holds one float per requested path (NaN where the path
    failed).  The report is invalid when more than 1% of paths failed;
    consumers must treat an invalid report as no result at all.
    """

    n_paths: int
    values: np.ndarray
    failures: list
    mean: float
    std_err: float

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    @property
    def valid(self) -> bool:
        return self.n_failed <= 0.01 * self.n_paths

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "n_failed": self.n_failed,
            "valid": self.valid,
            "mean": self.mean,
            "std_err": self.std_err,
            "failures": [[int(i), str(msg)] for i, msg in self.failures],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path_or_buf) -> None:
        lines = [
            "# per-path ensemble values; NaN marks a failed path",
            f"# mean={self.mean:.17g} std_err={self.std_err:.17g} "
            f"n_failed={self.n_failed} valid={self.valid}",
            "path_index,value",
        ]
        for i, v in enumerate(self.values):
            lines.append(f"{i},{v:.17g}")
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)


def run_ensemble(task: Callable[[RngStream], float], base_rng: RngStream,
                 n_paths: int, threads: int = 1) -> EnsembleReport:
    """Run task on streams (seed, 0), ..., (seed, n_paths-1).

    Numerical failures in individual paths are recorded, not raised;
    the reduction happens in path-index order with fsum so the report
    does not depend on thread scheduling.  Configuration errors are
    programming mistakes and propagate.
    """
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")

    def one(i: int):
        try:
            return float(task(base_rng.with_stream(i))), None
        except NumericalError as exc:
            return float("nan"), str(exc)

    if threads == 1:
        outcomes = [one(i) for i in range(n_paths)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, range(n_paths)))
    values = np.array([v for v, _ in outcomes])
    failures = [(i, msg) for i, (_, msg) in enumerate(outcomes)
                if msg is not None]
    good = values[np.isfinite(values)]
    if good.size >= 2:
        mean, se = mean_and_se(good)
    elif good.size == 1:
        mean, se = float(good[0]), float("nan")
    else:
        mean, se = float("nan"), float("nan")
    return EnsembleReport(n_paths, values, failures, mean, se)
