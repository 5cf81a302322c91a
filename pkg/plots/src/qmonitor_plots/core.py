"""Panel rendering for simulation run artifacts.

Three panel kinds cover the shipped CSV schemas:

- ``trajectory``: two panels from one trajectory CSV, a zoom on the
  early oscillatory window next to the full diffusive range.  When the
  run manifest tags the potential as harmonic, both panels overlay the
  closed-form mean and a two-standard-deviation envelope recomputed
  from the manifest parameters.
- ``variance-vs-time``: ensemble sample variance with its standard
  error band against the closed-form variance column, with the maximum
  relative gap annotated.
- ``convergence``: log-log error-vs-parameter series from the sweep
  CSVs (per-observable errors against gamma, or endpoint KS distances
  against omega).

Rendering never imports the simulation library and never writes into
run directories; the only output is the requested image file, written
after the figure is fully built so a bad input cannot leave an empty
image behind.  Re-rendering identical inputs produces identical bytes.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .csvio import (  # noqa: E402
    manifest_param,
    read_manifest,
    read_table,
    require_columns,
)
from .errors import DataError, SchemaError, SpecError  # noqa: E402

KINDS = ("trajectory", "variance-vs-time", "convergence")
IMAGE_SUFFIXES = (".png", ".svg")
FIG_DPI = 130
_SVG_RC = {"svg.hashsalt": "qmonitor-plots"}


def _range_pair(value, name):
    if value is None:
        return None
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise SpecError(f"{name} must be a (low, high) pair, "
                        f"got {value!r}") from None
    if not lo < hi:
        raise SpecError(f"{name} needs low < high, got ({lo}, {hi})")
    return (lo, hi)


@dataclass(frozen=True)
class PlotSpec:
    """One figure request: inputs, panel kind, ranges, output path.

    x_range and y_range clip the full-range axes (the zoom panel of a
    trajectory figure keeps its own early-time window).  t_split sets
    where that zoom window ends; it defaults to a quarter of the
    recorded horizon.
    """

    kind: str
    inputs: tuple
    output: Path
    manifest: Optional[Path] = None
    x_range: Optional[tuple] = None
    y_range: Optional[tuple] = None
    t_split: Optional[float] = None
    title: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown panel kind {self.kind!r}; choose from "
                            + ", ".join(KINDS))
        inputs = tuple(Path(p) for p in (
            self.inputs if not isinstance(self.inputs, (str, Path))
            else (self.inputs,)))
        if not inputs:
            raise SpecError("at least one input CSV is required")
        if self.kind != "convergence" and len(inputs) != 1:
            raise SpecError(
                f"kind '{self.kind}' takes exactly one input CSV, "
                f"got {len(inputs)}")
        object.__setattr__(self, "inputs", inputs)
        out = Path(self.output)
        if out.suffix not in IMAGE_SUFFIXES:
            raise SpecError("output must end in .png or .svg, "
                            f"got {out.name!r}")
        object.__setattr__(self, "output", out)
        object.__setattr__(self, "x_range",
                           _range_pair(self.x_range, "x_range"))
        object.__setattr__(self, "y_range",
                           _range_pair(self.y_range, "y_range"))
        if self.t_split is not None and not self.t_split > 0.0:
            raise SpecError(f"t_split must be positive, got {self.t_split}")
        if self.manifest is not None:
            object.__setattr__(self, "manifest", Path(self.manifest))


def _harmonic_overlay(manifest_path):
    """(Omega, eps, x0, v0) when the manifest marks a harmonic run.

    Packet manifests carry (omega, ell) instead of eps; the noise
    scale then follows from eps = omega^3 ell^2.
    """
    if manifest_path is None:
        return None
    man = read_manifest(manifest_path)
    if man.get("tags", {}).get("potential") != "harmonic":
        return None
    params = man.get("config", {}).get("params", {})
    Omega = manifest_param(man, "Omega", manifest_path)
    if Omega <= 0.0:
        return None
    if "eps" in params:
        eps = manifest_param(man, "eps", manifest_path)
    else:
        eps = (manifest_param(man, "omega", manifest_path) ** 3
               * manifest_param(man, "ell", manifest_path) ** 2)
    x0 = manifest_param(man, "x0", manifest_path) if "x0" in params else 0.0
    v0 = manifest_param(man, "v0", manifest_path) if "v0" in params else 0.0
    return Omega, eps, x0, v0


def _overlay_curves(t, overlay):
    Omega, eps, x0, v0 = overlay
    mean = x0 * np.cos(Omega * t) + (v0 / Omega) * np.sin(Omega * t)
    var = (eps / Omega**2) * (t / 2.0
                              - np.sin(2.0 * Omega * t) / (4.0 * Omega))
    sd = np.sqrt(np.maximum(var, 0.0))
    return mean, sd


def _position_column(columns, path):
    require_columns(columns, ("t",), path)
    for name in ("x", "xbar"):
        if name in columns:
            return name
    raise SchemaError(f"{path} lacks a position column ('x' or 'xbar'); "
                      "header has: " + ", ".join(columns))


def _trajectory_figure(spec):
    path = spec.inputs[0]
    _, columns = read_table(path)
    ycol = _position_column(columns, path)
    t = columns["t"]
    series = columns[ycol]
    t_end = float(t[-1])
    split = spec.t_split if spec.t_split is not None else t_end / 4.0
    mask = t <= split
    if not np.any(mask):
        raise SpecError(f"t_split={split:g} leaves the zoom panel empty "
                        f"(recorded times start at {t[0]:g})")
    overlay = _harmonic_overlay(spec.manifest)

    fig, (ax_zoom, ax_full) = plt.subplots(
        1, 2, figsize=(9.6, 3.8), dpi=FIG_DPI)
    # data series first, so lines[0] is always the recorded trajectory
    ax_zoom.plot(t[mask], series[mask], color="C0", lw=1.0,
                 label="trajectory")
    ax_full.plot(t, series, color="C0", lw=0.8, label="trajectory")
    if overlay is not None:
        for ax, tt in ((ax_zoom, t[mask]), (ax_full, t)):
            mean, sd = _overlay_curves(tt, overlay)
            ax.plot(tt, mean, color="k", ls="--", lw=0.9,
                    label="closed-form mean")
            ax.fill_between(tt, mean - 2.0 * sd, mean + 2.0 * sd,
                            color="C0", alpha=0.18, lw=0.0,
                            label="mean +/- 2 sd")
    ax_zoom.set_title(f"oscillatory window (t <= {split:g})")
    ax_full.set_title("full range (diffusive growth)")
    for ax in (ax_zoom, ax_full):
        ax.set_xlabel("t")
        ax.set_ylabel(ycol)
        if spec.y_range is not None:
            ax.set_ylim(*spec.y_range)
    if spec.x_range is not None:
        ax_full.set_xlim(*spec.x_range)
    ax_full.legend(loc="upper left", fontsize=8)
    fig.suptitle(spec.title or path.stem)
    fig.tight_layout()
    return fig


def _variance_figure(spec):
    path = spec.inputs[0]
    _, columns = read_table(path)
    require_columns(columns,
                    ("t", "sample_var", "std_err", "closed_form"), path)
    t = columns["t"]
    sample = columns["sample_var"]
    band = 3.0 * columns["std_err"]
    closed = columns["closed_form"]
    if not np.any(np.isfinite(closed)):
        raise DataError(
            f"{path}: closed_form column is empty; only harmonic runs "
            "carry a closed-form variance to overlay")
    ok = np.isfinite(closed) & (closed > 0.0)
    gap = float(np.max(np.abs(sample[ok] - closed[ok]) / closed[ok]))

    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=FIG_DPI)
    ax.plot(t, sample, color="C0", lw=1.2, label="sample variance")
    ax.fill_between(t, sample - band, sample + band, color="C0",
                    alpha=0.25, lw=0.0, label="+/- 3 std err")
    ax.plot(t, closed, color="k", ls="--", lw=1.0, label="closed form")
    ax.text(0.02, 0.96, f"max relative gap: {gap:.2%}",
            transform=ax.transAxes, va="top", fontsize=9)
    ax.set_xlabel("t")
    ax.set_ylabel("Var(x)")
    if spec.x_range is not None:
        ax.set_xlim(*spec.x_range)
    if spec.y_range is not None:
        ax.set_ylim(*spec.y_range)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title(spec.title or path.stem)
    fig.tight_layout()
    return fig


def _convergence_series(columns, path):
    """Yield (x, y, label) series from a sweep CSV of either schema."""
    if "gamma" in columns and "abs_error" in columns:
        require_columns(columns, ("gamma", "observable", "abs_error"), path)
        labels = sorted(set(columns["observable"]))
        for label in labels:
            sel = columns["observable"] == label
            yield columns["gamma"][sel], columns["abs_error"][sel], str(label)
        return
    if "omega" in columns and "ks_stat" in columns:
        yield columns["omega"], columns["ks_stat"], "KS distance"
        if "ks_critical" in columns:
            yield (columns["omega"], columns["ks_critical"],
                   "1% critical value")
        return
    raise SchemaError(
        f"{path} matches neither sweep schema: need (gamma, observable, "
        "abs_error) or (omega, ks_stat); header has: " + ", ".join(columns))


def _convergence_figure(spec):
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=FIG_DPI)
    many = len(spec.inputs) > 1
    for path in spec.inputs:
        _, columns = read_table(path)
        for x, y, label in _convergence_series(columns, path):
            if many:
                label = f"{path.stem}: {label}"
            style = "--" if label.endswith("critical value") else "-"
            ax.plot(x, y, marker="o", ms=4, ls=style, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("sweep parameter")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    ax.set_title(spec.title or "convergence")
    fig.tight_layout()
    return fig


_BUILDERS = {
    "trajectory": _trajectory_figure,
    "variance-vs-time": _variance_figure,
    "convergence": _convergence_figure,
}


def render(spec: PlotSpec):
    """Build the figure for spec, write spec.output, return the figure.

    The caller owns the returned figure (close it with
    matplotlib.pyplot.close when done inspecting).
    """
    fig = _BUILDERS[spec.kind](spec)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if spec.output.suffix == ".svg" else None
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(spec.output, dpi=FIG_DPI, metadata=metadata)
    return fig
