"""Command line interface: config parsing, outputs, manifests, reruns."""

import hashlib
import io
import json
from contextlib import redirect_stdout

import numpy as np
import pytest

from qmonitor import cli
from qmonitor.errors import ConfigError
from qmonitor.packet import variance_closed_form

LANGEVIN_INI = """\
[experiment]
kind = langevin
seed = 4242
n_paths = {n_paths}

[params]
Omega = 1.0
eps = 1.0
x0 = 2.0
v0 = 0.0
dt = 0.01
t_final = 2.0
record_every = 10
"""


def _write_config(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    import contextlib
    with redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(argv)
    return code, out.getvalue(), err.getvalue()


def _read_csv(path):
    lines = [ln for ln in path.read_text().splitlines()
             if ln and not ln.startswith("#")]
    names = lines[0].split(",")
    rows = [[float(v) if v else np.nan for v in ln.split(",")]
            for ln in lines[1:]]
    data = np.array(rows)
    return {name: data[:, j] for j, name in enumerate(names)}


def test_load_experiment_applies_overrides(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=1))
    exp = cli.load_experiment(cfg, seed=99, threads=2,
                              output=str(tmp_path / "out"),
                              sets=("Omega=3.0", "x0=1.5"))
    assert exp.kind == "langevin"
    assert exp.seed == 99 and exp.threads == 2
    assert exp.params["Omega"] == "3.0"
    assert exp.params["x0"] == "1.5"
    assert exp.params["eps"] == "1.0"


def test_load_experiment_rejects_unknown_kind(tmp_path):
    cfg = _write_config(tmp_path, "[experiment]\nkind = warp\n")
    with pytest.raises(ConfigError, match="unknown kind"):
        cli.load_experiment(cfg)


def test_load_experiment_rejects_malformed_set(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=1))
    with pytest.raises(ConfigError, match="key=value"):
        cli.load_experiment(cfg, sets=("Omega",))


def test_langevin_run_writes_trajectory_and_manifest(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=1))
    outdir = tmp_path / "run"
    code, out, err = _run(["run", "--config", str(cfg),
                           "--output", str(outdir)])
    assert code == 0, err
    traj = outdir / "trajectory.csv"
    assert traj.is_file()
    text = traj.read_text()
    assert text.startswith("#")
    assert "t,x,v" in text
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["kind"] == "langevin"
    assert manifest["config"]["params"]["Omega"] == "1.0"
    assert manifest["tags"]["potential"] == "harmonic"
    digest = hashlib.sha256(traj.read_bytes()).hexdigest()
    assert manifest["outputs"]["trajectory.csv"] == digest
    data = _read_csv(traj)
    assert data["t"][0] == 0.0 and data["t"][-1] == pytest.approx(2.0)
    assert data["x"][0] == 2.0 and data["v"][0] == 0.0


def test_langevin_batch_variance_column(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=16))
    outdir = tmp_path / "run"
    code, _, err = _run(["run", "--config", str(cfg),
                         "--output", str(outdir)])
    assert code == 0, err
    data = _read_csv(outdir / "variance.csv")
    for t, ref in zip(data["t"], data["closed_form"]):
        assert ref == pytest.approx(variance_closed_form(t, 1.0, 1.0),
                                    rel=1e-12, abs=1e-300)


def test_missing_parameter_names_the_key(tmp_path):
    cfg = _write_config(tmp_path, """\
[experiment]
kind = qnd-observer

[params]
prior = two-atom
x_left = -1.0
x_right = 1.0
dt = 0.001
t_final = 1.0
""")
    code, _, err = _run(["run", "--config", str(cfg),
                         "--output", str(tmp_path / "o")])
    assert code == 2
    assert "gamma" in err
    assert "qnd-observer" in err


def test_bad_value_type_names_the_key(tmp_path):
    cfg = _write_config(
        tmp_path, LANGEVIN_INI.format(n_paths=1).replace("dt = 0.01",
                                                         "dt = fast"))
    code, _, err = _run(["run", "--config", str(cfg),
                         "--output", str(tmp_path / "o")])
    assert code == 2
    assert "'dt'" in err


def test_time_grid_must_divide_evenly(tmp_path):
    cfg = _write_config(
        tmp_path, LANGEVIN_INI.format(n_paths=1).replace("t_final = 2.0",
                                                         "t_final = 2.005"))
    code, _, err = _run(["run", "--config", str(cfg),
                         "--output", str(tmp_path / "o")])
    assert code == 2
    assert "t_final" in err and "dt" in err


def test_repeat_runs_are_byte_identical(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=4))
    a, b = tmp_path / "a", tmp_path / "b"
    for outdir in (a, b):
        code, _, err = _run(["run", "--config", str(cfg),
                             "--output", str(outdir)])
        assert code == 0, err
    for name in ("trajectory.csv", "variance.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_seed_override_changes_noise_not_schema(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=1))
    a, b = tmp_path / "a", tmp_path / "b"
    _run(["run", "--config", str(cfg), "--output", str(a)])
    _run(["run", "--config", str(cfg), "--output", str(b), "--seed", "5"])
    da, db = _read_csv(a / "trajectory.csv"), _read_csv(b / "trajectory.csv")
    np.testing.assert_array_equal(da["t"], db["t"])
    assert not np.array_equal(da["x"], db["x"])


def test_rerun_verifies_and_detects_tampering(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=1))
    outdir = tmp_path / "run"
    code, _, _ = _run(["run", "--config", str(cfg), "--output", str(outdir)])
    assert code == 0

    code, out, _ = _run(["rerun", str(outdir)])
    assert code == 0
    assert "re-run verified" in out

    mpath = outdir / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["config"]["experiment"]["seed"] = "777"
    mpath.write_text(json.dumps(manifest))
    code, out, _ = _run(["rerun", str(outdir)])
    assert code == 1
    assert "checksum mismatch: trajectory.csv" in out


def test_manifest_command_prints_json(tmp_path):
    cfg = _write_config(tmp_path, LANGEVIN_INI.format(n_paths=1))
    outdir = tmp_path / "run"
    _run(["run", "--config", str(cfg), "--output", str(outdir)])
    code, out, _ = _run(["manifest", str(outdir)])
    assert code == 0
    echoed = json.loads(out)
    assert echoed["kind"] == "langevin"
    assert "trajectory.csv" in echoed["outputs"]

    code, _, err = _run(["manifest", str(tmp_path / "nowhere")])
    assert code == 2
    assert "manifest.json" in err


def test_verify_runs_a_single_criterion(tmp_path):
    code, out, err = _run(["verify", "--criteria", "A10"])
    assert code == 0, err
    assert "A10" in out and "PASS" in out


def test_verify_rejects_unknown_criterion(tmp_path):
    code, _, err = _run(["verify", "--criteria", "A99"])
    assert code == 2
    assert "A99" in err


def test_unknown_param_is_rejected(tmp_path):
    cfg = _write_config(
        tmp_path,
        LANGEVIN_INI.format(n_paths=1) + "speed = 11\n")
    code, _, err = _run(["run", "--config", str(cfg),
                         "--output", str(tmp_path / "o")])
    assert code == 2
    assert "'speed'" in err
