"""End-to-end criterion A15: the oscillatory-to-diffusive crossover figure.

Drives the simulation CLI as a subprocess (the only coupling is the
file contract), renders the two-panel trajectory figure for the
harmonic run with Omega = 1, eps = 1, x0 = 2, v0 = 0 over t in
[0, 20], and asserts the rendered series equal the CSV series exactly.
"""

import math
import subprocess
import sys

import matplotlib.pyplot as plt
import numpy as np
import pytest

from qmonitor_plots import PlotSpec, render
from qmonitor_plots.csvio import read_table

RUN_INI = """\
[experiment]
kind = langevin
seed = 20260814
n_paths = {n_paths}

[params]
Omega = 1.0
eps = 1.0
x0 = 2.0
v0 = 0.0
dt = 0.001
t_final = {t_final}
record_every = 10
"""


def _cli_run(tmp_path, n_paths, t_final):
    cfg = tmp_path / "run.ini"
    cfg.write_text(RUN_INI.format(n_paths=n_paths, t_final=t_final))
    outdir = tmp_path / "run"
    proc = subprocess.run(
        [sys.executable, "-m", "qmonitor", "run", "--config", str(cfg),
         "--output", str(outdir)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return outdir


def test_crossover_figure_reproduces_csv_series(tmp_path, capsys):
    outdir = _cli_run(tmp_path, n_paths=1, t_final="20.0")
    split = 2.0 * math.pi
    out = tmp_path / "crossover.png"
    spec = PlotSpec("trajectory", (outdir / "trajectory.csv",), out,
                    manifest=outdir / "manifest.json", t_split=split,
                    title="monitored particle, harmonic trap")
    fig = render(spec)
    try:
        assert len(fig.axes) == 2
        zoom, full = fig.axes
        _, cols = read_table(outdir / "trajectory.csv")
        t, x = cols["t"], cols["x"]
        # rendered series equal the CSV series, bitwise
        np.testing.assert_array_equal(full.lines[0].get_xdata(), t)
        np.testing.assert_array_equal(full.lines[0].get_ydata(), x)
        mask = t <= split
        assert 1 < mask.sum() < t.size  # the split really is a zoom
        np.testing.assert_array_equal(zoom.lines[0].get_xdata(), t[mask])
        np.testing.assert_array_equal(zoom.lines[0].get_ydata(), x[mask])
        # harmonic manifest turns on the closed-form overlay in each panel
        for ax in (zoom, full):
            assert len(ax.lines) == 2
            assert len(ax.collections) == 1
        # the mean overlay starts at x0 and the envelope grows diffusively
        assert full.lines[1].get_ydata()[0] == pytest.approx(2.0)
    finally:
        plt.close(fig)
    assert out.is_file() and out.stat().st_size > 10_000

    again = tmp_path / "crossover_again.png"
    plt.close(render(PlotSpec("trajectory", (outdir / "trajectory.csv",),
                              again, manifest=outdir / "manifest.json",
                              t_split=split,
                              title="monitored particle, harmonic trap")))
    assert again.read_bytes() == out.read_bytes()
    with capsys.disabled():
        print("\nA15 PASS - crossover figure reproduces the CSV series",
              end="")


def test_variance_panel_tracks_closed_form_from_a_real_run(tmp_path):
    outdir = _cli_run(tmp_path, n_paths=256, t_final="2.0")
    out = tmp_path / "variance.png"
    fig = render(PlotSpec("variance-vs-time", (outdir / "variance.csv",),
                          out))
    try:
        ax = fig.axes[0]
        notes = [t.get_text() for t in ax.texts]
        assert len(notes) == 1 and notes[0].startswith("max relative gap:")
        gap = float(notes[0].split(":")[1].strip().rstrip("%")) / 100.0
        # 256 paths put the sample variance within ~25% of the closed form
        assert gap < 0.4
    finally:
        plt.close(fig)
    assert out.is_file()
