"""Command-line front end.

Experiments are described by INI files with an ``[experiment]`` section
(kind, seed, n_paths, output, threads) and a ``[params]`` section whose
keys depend on the kind.  A run writes ``#``-commented CSV outputs plus
a ``manifest.json`` recording the full configuration, library versions,
wall time and the sha256 of every output, so any run can be re-executed
and checked byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .measure import (
    GridMeasure,
    mean_and_variance,
    measure_to_csv,
    register_test_function,
)
from .noise import RngStream, TimeGrid
from .qnd import (
    DiscreteChainConfig,
    chain_outcome_batch,
    cheater_signal_batch,
    girsanov_check,
    run_discrete_chain,
    simulate_observer,
)
from .lindblad import (
    LindbladSpec,
    MonitoredDiffusionConfig,
    diffusion_batch,
    simulate_monitored_diffusion,
    strong_limit_sweep,
)
from .packet import (
    GaussianPacket,
    PhysicalScales,
    Potential,
    double_scaling_study,
    langevin_batch,
    packet_batch,
    packet_dispersions,
    simulate_langevin,
    simulate_packet,
    variance_closed_form,
)
from .stats import mean_and_se, run_ensemble, variance_fsum

__all__ = ["main", "KINDS"]

KINDS = (
    "qnd-observer",
    "qnd-cheater",
    "qnd-discrete",
    "diffusion",
    "lindblad-sde",
    "packet",
    "langevin",
    "double-scaling",
    "girsanov",
    "verify-suite",
)

_GIRSANOV_FUNCTIONALS = {
    "A*S": lambda a, s: a * s,
    "S": lambda a, s: s,
    "S^2": lambda a, s: s * s,
}

_PATH_CHUNK = 1024


def _fmt(x) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class Experiment:
    kind: str
    seed: int
    n_paths: int
    threads: int
    output: Optional[Path]
    params: dict

    def config_dict(self) -> dict:
        exp = {
            "kind": self.kind,
            "seed": str(self.seed),
            "n_paths": str(self.n_paths),
            "threads": str(self.threads),
        }
        if self.output is not None:
            exp["output"] = str(self.output)
        return {"experiment": exp, "params": dict(self.params)}


class ParamReader:
    """Typed access to the [params] section.

    Every error names the offending key; unread keys are rejected at
    the end so typos never pass silently.
    """

    def __init__(self, kind: str, params: dict):
        self.kind = kind
        self.params = params
        self._used = set()

    def _raw(self, key: str):
        self._used.add(key)
        return self.params.get(key)

    def _parse(self, key: str, raw: str, cast, what: str):
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise ConfigError(
                f"parameter '{key}' must be {what}, got {raw!r}") from None

    def require_float(self, key: str) -> float:
        raw = self._raw(key)
        if raw is None:
            raise ConfigError(f"missing required parameter '{key}' "
                              f"for kind '{self.kind}'")
        return self._parse(key, raw, float, "a number")

    def optional_float(self, key: str, default: float) -> float:
        raw = self._raw(key)
        if raw is None:
            return default
        return self._parse(key, raw, float, "a number")

    def require_int(self, key: str) -> int:
        raw = self._raw(key)
        if raw is None:
            raise ConfigError(f"missing required parameter '{key}' "
                              f"for kind '{self.kind}'")
        return self._parse(key, raw, int, "an integer")

    def optional_int(self, key: str, default: int) -> int:
        raw = self._raw(key)
        if raw is None:
            return default
        return self._parse(key, raw, int, "an integer")

    def optional_str(self, key: str, default: Optional[str] = None,
                     choices=None) -> Optional[str]:
        raw = self._raw(key)
        if raw is None:
            return default
        if choices is not None and raw not in choices:
            raise ConfigError(f"parameter '{key}' must be one of "
                              f"{sorted(choices)}, got {raw!r}")
        return raw

    def float_list(self, key: str) -> Optional[list]:
        raw = self._raw(key)
        if raw is None:
            return None
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if not items:
            raise ConfigError(f"parameter '{key}' must be a comma-separated "
                              "list of numbers")
        return [self._parse(key, s, float, "a number") for s in items]

    def finish(self) -> None:
        unknown = sorted(set(self.params) - self._used)
        if unknown:
            raise ConfigError(
                f"unknown parameter(s) for kind '{self.kind}': "
                + ", ".join(f"'{k}'" for k in unknown))


def load_experiment(path: Path, *, seed=None, threads=None, output=None,
                    sets=()) -> Experiment:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser.read(path)
    if "experiment" not in parser:
        raise ConfigError("config needs an [experiment] section")
    exp = parser["experiment"]
    kind = exp.get("kind")
    if kind is None:
        raise ConfigError("missing required key 'kind' in [experiment]")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; choose from "
                          + ", ".join(KINDS))
    known = {"kind", "seed", "n_paths", "threads", "output"}
    unknown = sorted(set(exp) - known)
    if unknown:
        raise ConfigError("unknown key(s) in [experiment]: "
                          + ", ".join(f"'{k}'" for k in unknown))

    def exp_int(key: str, default: int) -> int:
        raw = exp.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key '{key}' in [experiment] must be an "
                              f"integer, got {raw!r}") from None

    seed_val = exp_int("seed", 0) if seed is None else seed
    n_paths = exp_int("n_paths", 1)
    threads_val = exp_int("threads", 1) if threads is None else threads
    if n_paths < 1:
        raise ConfigError("key 'n_paths' must be >= 1")
    if threads_val < 1:
        raise ConfigError("key 'threads' must be >= 1")
    out = exp.get("output")
    out_path = Path(output) if output is not None else (
        Path(out) if out is not None else None)
    params = dict(parser["params"]) if "params" in parser else {}
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        params[key.strip()] = value.strip()
    return Experiment(kind, seed_val, n_paths, threads_val, out_path, params)


# ---------------------------------------------------------------------------
# shared builders


def _build_prior(p: ParamReader) -> GridMeasure:
    style = p.optional_str("prior", "two-atom",
                           choices={"two-atom", "gaussian", "point"})
    if style == "two-atom":
        return GridMeasure.two_atoms(p.optional_float("x_left", -1.0),
                                     p.optional_float("x_right", 1.0),
                                     p.optional_float("p_left", 0.5))
    x_min = p.optional_float("x_min", -6.0)
    dx = p.optional_float("dx", 0.03)
    n_points = p.optional_int("n_points", 401)
    if style == "gaussian":
        return GridMeasure.gaussian(p.optional_float("mean", 0.0),
                                    p.optional_float("sigma", 0.5),
                                    x_min=x_min, dx=dx, n_points=n_points)
    return GridMeasure.point_mass(p.optional_float("x_center", 0.0),
                                  x_min=x_min, dx=dx, n_points=n_points)


def _build_grid(p: ParamReader) -> TimeGrid:
    dt = p.require_float("dt")
    t_final = p.require_float("t_final")
    if dt <= 0:
        raise ConfigError("parameter 'dt' must be positive")
    if t_final <= 0:
        raise ConfigError("parameter 't_final' must be positive")
    n = int(round(t_final / dt))
    if n < 1 or abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigError("parameter 't_final' must be an integer multiple "
                          "of 'dt'")
    return TimeGrid(dt=dt, n_steps=n)


def _record_nodes(grid: TimeGrid, record_every: int):
    if record_every < 1:
        raise ConfigError("parameter 'record_every' must be >= 1")
    ks = list(range(0, grid.n_steps + 1, record_every))
    if ks[-1] != grid.n_steps:
        ks.append(grid.n_steps)
    return np.asarray(ks, dtype=int)


def _csv(comments, columns, rows) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(
            v if isinstance(v, str) else _fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# kind handlers: each returns (outputs, summary, tags, exit_code)


def _run_langevin(exp: Experiment, p: ParamReader):
    Omega = p.require_float("Omega")
    eps = p.require_float("eps")
    x0 = p.optional_float("x0", 0.0)
    v0 = p.optional_float("v0", 0.0)
    grid = _build_grid(p)
    record_every = p.optional_int("record_every", 1)
    p.finish()
    harmonic = Omega > 0.0
    potential = Potential.harmonic(Omega) if harmonic else Potential.free()
    ks = _record_nodes(grid, record_every)
    header = (f"inertial Langevin run: Omega={_fmt(Omega)} eps={_fmt(eps)} "
              f"x0={_fmt(x0)} v0={_fmt(v0)} dt={_fmt(grid.dt)} "
              f"seed={exp.seed}")
    times, x, v = simulate_langevin(x0, v0, potential, eps, grid,
                                    RngStream(exp.seed, 0))
    outputs = [("trajectory.csv", _csv(
        [header, "single trajectory on stream 0"],
        ["t", "x", "v"],
        [(times[k], x[k], v[k]) for k in ks]))]
    if exp.n_paths > 1:
        rec = ks[ks > 0]
        rec_times = rec * grid.dt
        xs = np.empty((exp.n_paths, rec.size))
        for c in range(0, exp.n_paths, _PATH_CHUNK):
            m = min(_PATH_CHUNK, exp.n_paths - c)
            _, xb, _ = langevin_batch(x0, v0, potential, eps, grid,
                                      RngStream(exp.seed, 0), m,
                                      record_times=rec_times,
                                      stream_offset=c)
            xs[c:c + m] = xb
        rows = []
        for j, t in enumerate(rec_times):
            var = variance_fsum(xs[:, j])
            se = var * np.sqrt(2.0 / (exp.n_paths - 1))
            ref = variance_closed_form(t, Omega, eps) if harmonic else ""
            rows.append((t, var, se, ref))
        outputs.append(("variance.csv", _csv(
            [header, f"sample variance over {exp.n_paths} paths; "
             "closed_form filled for harmonic runs only"],
            ["t", "sample_var", "std_err", "closed_form"], rows)))
    tags = {"potential": "harmonic" if harmonic else "free"}
    return outputs, f"langevin run complete ({exp.n_paths} paths)", tags, 0


def _run_packet(exp: Experiment, p: ParamReader):
    omega = p.require_float("omega")
    ell = p.require_float("ell")
    Omega = p.optional_float("Omega", 0.0)
    x0 = p.optional_float("x0", 0.0)
    v0 = p.optional_float("v0", 0.0)
    grid = _build_grid(p)
    record_every = p.optional_int("record_every", 1)
    p.finish()
    scales = PhysicalScales.from_omega_ell(omega, ell)
    harmonic = Omega > 0.0
    potential = Potential.harmonic(Omega) if harmonic else Potential.free()
    header = (f"collapsed-packet run: omega={_fmt(omega)} ell={_fmt(ell)} "
              f"Omega={_fmt(Omega)} x0={_fmt(x0)} v0={_fmt(v0)} "
              f"dt={_fmt(grid.dt)} seed={exp.seed}")
    path = simulate_packet(x0, v0, scales, potential, grid,
                           RngStream(exp.seed, 0))
    ks = _record_nodes(grid, record_every)
    rows = []
    for k in ks:
        pk = GaussianPacket(path.xbar[k], path.vbar[k], path.a[k],
                            path.times[k])
        disp = packet_dispersions(pk, scales)
        rows.append((path.times[k], path.xbar[k], path.vbar[k],
                     path.a[k].real, path.a[k].imag,
                     disp.sigma_x, disp.sigma_v))
    outputs = [("trajectory.csv", _csv(
        [header,
         f"single packet on stream 0; validity flags held on all steps: "
         f"{str(bool(path.all_valid)).lower()}"],
        ["t", "xbar", "vbar", "re_a", "im_a", "sigma_x", "sigma_v"], rows))]
    if exp.n_paths > 1:
        ens = packet_batch(x0, v0, scales, potential, grid,
                           RngStream(exp.seed, 0), exp.n_paths)
        outputs.append(("endpoints.csv", _csv(
            [header, f"packet endpoints at t={_fmt(ens.times[-1])}"],
            ["path", "x_end", "v_end", "valid"],
            [(str(i), ens.xbar[i, -1], ens.vbar[i, -1],
              str(bool(ens.all_valid[i])).lower())
             for i in range(exp.n_paths)])))
    tags = {"potential": "harmonic" if harmonic else "free"}
    return outputs, f"packet run complete ({exp.n_paths} paths)", tags, 0


def _run_qnd_observer(exp: Experiment, p: ParamReader):
    gamma = p.require_float("gamma")
    grid = _build_grid(p)
    method = p.optional_str("method", "exponential",
                            choices={"exponential", "linear"})
    record_every = p.optional_int("record_every", 1)
    mu0 = _build_prior(p)
    p.finish()
    header = (f"monitored observer run: gamma={_fmt(gamma)} "
              f"dt={_fmt(grid.dt)} method={method} seed={exp.seed}")
    measures, sig = simulate_observer(mu0, grid, gamma,
                                      RngStream(exp.seed, 0), method,
                                      record_every)
    ks = _record_nodes(grid, record_every)
    rows = []
    for mu, k in zip(measures, ks):
        m, v = mean_and_variance(mu)
        rows.append((sig.grid.t_at(k), sig.S[k], m, v))
    outputs = [("trajectory.csv", _csv(
        [header, "posterior summary along the stream-0 trajectory"],
        ["t", "S", "post_mean", "post_var"], rows))]
    if exp.n_paths > 1:
        def final_variance(rng: RngStream) -> float:
            ms, _ = simulate_observer(mu0, grid, gamma, rng, method,
                                      record_every=grid.n_steps)
            return mean_and_variance(ms[-1])[1]

        report = run_ensemble(final_variance, RngStream(exp.seed, 0),
                              exp.n_paths, threads=exp.threads)
        buf = io.StringIO()
        report.write_csv(buf)
        outputs.append(("ensemble.csv",
                        f"# terminal posterior variance per path; {header}\n"
                        + buf.getvalue()))
        if not report.valid:
            return outputs, "too many failed paths", {}, 3
    return outputs, f"observer run complete ({exp.n_paths} paths)", {}, 0


def _run_qnd_cheater(exp: Experiment, p: ParamReader):
    gamma = p.require_float("gamma")
    grid = _build_grid(p)
    mu0 = _build_prior(p)
    p.finish()
    header = (f"cheater-frame signal samples: gamma={_fmt(gamma)} "
              f"t={_fmt(grid.t_end)} seed={exp.seed}")
    rows = []
    for c in range(0, exp.n_paths, _PATH_CHUNK):
        m = min(_PATH_CHUNK, exp.n_paths - c)
        xb, S = cheater_signal_batch(mu0, grid, gamma,
                                     RngStream(exp.seed, 0), m,
                                     record_times=[grid.t_end],
                                     stream_offset=c)
        rows.extend((str(c + i), xb[i], S[i, -1]) for i in range(m))
    outputs = [("samples.csv", _csv(
        [header], ["path", "xbar", "S_end"], rows))]
    return outputs, f"cheater run complete ({exp.n_paths} paths)", {}, 0


def _run_qnd_discrete(exp: Experiment, p: ParamReader):
    slope = p.optional_float("slope", 0.5)
    n_rounds = p.require_int("n_rounds")
    mu0 = _build_prior(p)
    p.finish()
    if np.max(np.abs(slope * mu0.x)) >= 1.0:
        raise ConfigError("parameter 'slope' must keep |slope * x| < 1 "
                          "on every prior node")

    def probability(i: int, alpha):
        p_one = 0.5 * (1.0 + slope * np.asarray(alpha, dtype=float))
        return p_one if i == 1 else 1.0 - p_one

    cfg = DiscreteChainConfig(probability, 2, mu0, n_rounds)
    header = (f"discrete monitoring chain: slope={_fmt(slope)} "
              f"n_rounds={n_rounds} seed={exp.seed}")
    if exp.n_paths == 1:
        outcomes, mu_end = run_discrete_chain(cfg, RngStream(exp.seed, 0))
        buf = io.StringIO()
        measure_to_csv(mu_end, buf)
        outputs = [
            ("outcomes.csv", _csv([header], ["round", "outcome"],
                                  [(str(r), str(int(o)))
                                   for r, o in enumerate(outcomes)])),
            ("posterior.csv", buf.getvalue()),
        ]
    else:
        outs = chain_outcome_batch(cfg, exp.n_paths, RngStream(exp.seed, 0))
        outputs = [("samples.csv", _csv(
            [header, "per-run frequency of outcome 1"],
            ["path", "freq_one"],
            [(str(i), float(np.mean(outs[i] == 1)))
             for i in range(exp.n_paths)]))]
    return outputs, f"discrete chain complete ({exp.n_paths} runs)", {}, 0


def _lindblad_spec(p: ParamReader) -> LindbladSpec:
    drift = p.optional_str("drift", "zero", choices={"zero", "ou"})
    rate = p.optional_float("rate", 1.0)
    amp = p.require_float("dissipation")
    if amp < 0:
        raise ConfigError("parameter 'dissipation' must be >= 0")
    if drift == "ou":
        U = lambda x: -rate * x
        dU = lambda x: -rate * np.ones_like(x)
    else:
        U = lambda x: np.zeros_like(x)
        dU = lambda x: np.zeros_like(x)
    return LindbladSpec(U=U,
                        V=lambda x: amp * np.ones_like(x),
                        dU=dU,
                        dV=lambda x: np.zeros_like(x),
                        ddV=lambda x: np.zeros_like(x))


def _run_diffusion(exp: Experiment, p: ParamReader, with_spec: bool):
    if with_spec:
        spec = _lindblad_spec(p)
        D = None
    else:
        spec = None
        D = p.require_float("D")
        if D < 0:
            raise ConfigError("parameter 'D' must be >= 0")
    gammas = p.float_list("gammas")
    gamma = p.optional_float("gamma", float("nan"))
    if gammas is None and np.isnan(gamma):
        raise ConfigError(f"missing required parameter 'gamma' (or 'gammas') "
                          f"for kind '{exp.kind}'")
    grid = _build_grid(p)
    record_every = p.optional_int("record_every", 1)
    mu0 = _build_prior(p)
    p.finish()
    kind_desc = "constant-diffusion" if not with_spec else "drift-diffusion"
    if gammas is not None:
        phi_x = register_test_function(lambda x: x, "x", mu0)
        phi_x2 = register_test_function(lambda x: x * x, "x^2", mu0)
        sweep = strong_limit_sweep(mu0, grid, gammas, [phi_x, phi_x2],
                                   RngStream(exp.seed, 0), exp.n_paths,
                                   D=D, spec=spec)
        buf = io.StringIO()
        sweep.to_csv(buf)
        outputs = [("sweep.csv", buf.getvalue())]
        return outputs, f"{kind_desc} sweep complete", {}, 0
    cfg = MonitoredDiffusionConfig(gamma=gamma, mu0=mu0, grid=grid,
                                   rng=RngStream(exp.seed, 0), D=D, spec=spec)
    header = (f"monitored {kind_desc} run: gamma={_fmt(gamma)} "
              f"dt={_fmt(grid.dt)} seed={exp.seed}")
    ks = _record_nodes(grid, record_every)
    if exp.n_paths == 1:
        measures, sig = simulate_monitored_diffusion(cfg, record_every)
        rows = []
        for mu, k in zip(measures, ks):
            m, v = mean_and_variance(mu)
            rows.append((grid.t_at(k), sig.S[k], m, v))
        outputs = [("trajectory.csv", _csv(
            [header, "posterior summary along the stream-0 trajectory"],
            ["t", "S", "post_mean", "post_var"], rows))]
        return outputs, f"{kind_desc} run complete (1 path)", {}, 0
    rec = ks[ks > 0]
    ens = diffusion_batch(cfg, exp.n_paths, RngStream(exp.seed, 0),
                          record_times=list(rec * grid.dt))
    ok = ens.ok
    n_ok = int(np.sum(ok))
    if n_ok < max(2, 0.99 * exp.n_paths):
        return [], f"{len(ens.failed)} of {exp.n_paths} paths died", {}, 3
    rows = []
    for j, t in enumerate(ens.times):
        m, m_se = mean_and_se(ens.post_mean[ok, j])
        v, v_se = mean_and_se(ens.post_var[ok, j])
        rows.append((t, m, m_se, v, v_se))
    outputs = [("moments.csv", _csv(
        [header, f"ensemble posterior moments over {n_ok} surviving paths "
         f"({len(ens.failed)} failed)"],
        ["t", "mean_post_mean", "se_post_mean", "mean_post_var",
         "se_post_var"], rows))]
    return outputs, f"{kind_desc} run complete ({exp.n_paths} paths)", {}, 0


def _run_double_scaling(exp: Experiment, p: ParamReader):
    omegas = p.float_list("omegas")
    if omegas is None:
        raise ConfigError("missing required parameter 'omegas' for kind "
                          "'double-scaling'")
    eps = p.optional_float("eps", 1.0)
    Omega = p.optional_float("Omega", 1.0)
    x0 = p.optional_float("x0", 1.0)
    v0 = p.optional_float("v0", 0.0)
    t_final = p.optional_float("t_final", 1.0)
    factor = p.optional_float("dt_max_factor", 1e-2)
    p.finish()
    report = double_scaling_study(omegas, RngStream(exp.seed, 0), eps=eps,
                                  Omega=Omega, x0=x0, v0=v0, t_final=t_final,
                                  n_paths=exp.n_paths,
                                  dt_max_factor=factor)
    buf = io.StringIO()
    report.to_csv(buf)
    return ([("double_scaling.csv", buf.getvalue())],
            "double-scaling study complete", {}, 0)


def _run_girsanov(exp: Experiment, p: ParamReader):
    name = p.optional_str("functional", "A*S",
                          choices=set(_GIRSANOV_FUNCTIONALS))
    t = p.optional_float("t", 1.0)
    n_samples = p.optional_int("n_samples", 100000)
    mu0 = _build_prior(p)
    p.finish()
    res = girsanov_check([(name, _GIRSANOV_FUNCTIONALS[name])], mu0, t,
                         n_samples, RngStream(exp.seed, 0))[0]
    outputs = [("girsanov.csv", _csv(
        [f"signal change-of-measure check at t={_fmt(t)} over "
         f"{n_samples} samples, seed={exp.seed}"],
        ["functional", "direct", "direct_se", "reweighted", "reweighted_se"],
        [(res.label, res.lhs, res.lhs_se, res.rhs, res.rhs_se)]))]
    return outputs, "change-of-measure check complete", {}, 0


def _run_verify(exp: Experiment, p: ParamReader):
    from . import acceptance

    raw = p.optional_str("criteria")
    p.finish()
    names = None
    if raw is not None:
        names = [s.strip() for s in raw.split(",") if s.strip()]
        for name in names:
            if name not in acceptance.CRITERIA:
                raise ConfigError(f"unknown criterion '{name}' in parameter "
                                  "'criteria'")
    results = acceptance.run_suite(names, seed=exp.seed)
    outputs = [("acceptance.csv", acceptance.acceptance_csv(results))]
    for r in results:
        outputs.extend(sorted(r.artifacts.items()))
    summary = acceptance.suite_table(results)
    code = 0 if all(r.passed for r in results) else 1
    return outputs, summary, {}, code


_HANDLERS = {
    "langevin": _run_langevin,
    "packet": _run_packet,
    "qnd-observer": _run_qnd_observer,
    "qnd-cheater": _run_qnd_cheater,
    "qnd-discrete": _run_qnd_discrete,
    "diffusion": lambda exp, p: _run_diffusion(exp, p, with_spec=False),
    "lindblad-sde": lambda exp, p: _run_diffusion(exp, p, with_spec=True),
    "double-scaling": _run_double_scaling,
    "girsanov": _run_girsanov,
    "verify-suite": _run_verify,
}


def execute(exp: Experiment):
    """Run the experiment in memory; returns (outputs, summary, tags, code)."""
    reader = ParamReader(exp.kind, exp.params)
    return _HANDLERS[exp.kind](exp, reader)


# ---------------------------------------------------------------------------
# manifest handling


def _versions() -> dict:
    from . import __version__
    import scipy

    return {
        "qmonitor": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_run(exp: Experiment, outputs, tags, wall_time: float) -> Path:
    if exp.output is None:
        raise ConfigError("missing required key 'output' in [experiment] "
                          "(or pass --output)")
    outdir = exp.output
    outdir.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name, text in outputs:
        data = text.encode("utf-8")
        (outdir / name).write_bytes(data)
        hashes[name] = _sha256(data)
    manifest = {
        "kind": exp.kind,
        "seed": exp.seed,
        "config": exp.config_dict(),
        "tags": tags,
        "versions": _versions(),
        "wall_time_s": wall_time,
        "outputs": hashes,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return outdir


def experiment_from_manifest(manifest: dict) -> Experiment:
    cfg = manifest.get("config", {})
    exp = cfg.get("experiment", {})
    params = dict(cfg.get("params", {}))
    try:
        return Experiment(exp["kind"], int(exp["seed"]),
                          int(exp.get("n_paths", "1")),
                          int(exp.get("threads", "1")), None, params)
    except (KeyError, ValueError) as err:
        raise ConfigError(f"manifest is missing or corrupts key {err}") \
            from None


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.is_file():
        raise ConfigError(f"no manifest.json under {run_dir}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"manifest.json is not valid JSON: {err}") from None


# ---------------------------------------------------------------------------
# subcommands


def _cmd_run(args) -> int:
    exp = load_experiment(Path(args.config), seed=args.seed,
                          threads=args.threads, output=args.output,
                          sets=args.set or ())
    start = time.perf_counter()
    outputs, summary, tags, code = execute(exp)
    wall = time.perf_counter() - start
    outdir = write_run(exp, outputs, tags, wall)
    print(summary)
    print(f"wrote {len(outputs)} output(s) + manifest.json to {outdir}")
    return code


def _cmd_manifest(args) -> int:
    manifest = _load_manifest(Path(args.run_dir))
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def _cmd_rerun(args) -> int:
    run_dir = Path(args.run_dir)
    manifest = _load_manifest(run_dir)
    exp = experiment_from_manifest(manifest)
    outputs, _, _, _ = execute(exp)
    fresh = {name: _sha256(text.encode("utf-8")) for name, text in outputs}
    stored = manifest.get("outputs", {})
    problems = []
    for name in sorted(set(stored) | set(fresh)):
        if name not in fresh:
            problems.append(f"checksum mismatch: {name} missing from re-run")
        elif name not in stored:
            problems.append(f"checksum mismatch: {name} absent from manifest")
        elif fresh[name] != stored[name]:
            problems.append(f"checksum mismatch: {name} "
                            f"(manifest {stored[name][:12]}..., "
                            f"re-run {fresh[name][:12]}...)")
    if problems:
        print("\n".join(problems))
        return 1
    print(f"re-run verified: {len(fresh)} output(s) match the manifest")
    return 0


def _cmd_verify(args) -> int:
    from . import acceptance

    params = {}
    if args.criteria:
        params["criteria"] = args.criteria
    seed = args.seed if args.seed is not None else acceptance.DEFAULT_SEED
    exp = Experiment("verify-suite", seed, 1, args.threads or 1,
                     Path(args.output) if args.output else None, params)
    start = time.perf_counter()
    outputs, summary, tags, code = execute(exp)
    wall = time.perf_counter() - start
    print(summary)
    if exp.output is not None:
        outdir = write_run(exp, outputs, tags, wall)
        print(f"wrote artifacts to {outdir}")
    return code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmonitor",
        description="simulation experiments for continuously monitored "
                    "diffusive systems")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a config and write outputs "
                                     "plus a manifest")
    run.add_argument("--config", required=True, help="INI experiment file")
    run.add_argument("--seed", type=int, default=None,
                     help="override [experiment] seed")
    run.add_argument("--threads", type=int, default=None,
                     help="override [experiment] threads")
    run.add_argument("--output", default=None,
                     help="override [experiment] output directory")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a [params] entry (repeatable)")
    run.set_defaults(func=_cmd_run)

    man = sub.add_parser("manifest", help="print the manifest of a run "
                                          "directory")
    man.add_argument("run_dir")
    man.set_defaults(func=_cmd_manifest)

    rerun = sub.add_parser("rerun", help="re-execute a run from its manifest "
                                         "and compare checksums")
    rerun.add_argument("run_dir")
    rerun.set_defaults(func=_cmd_rerun)

    verify = sub.add_parser("verify", help="run the acceptance suite")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--threads", type=int, default=None)
    verify.add_argument("--criteria", default=None,
                        help="comma-separated subset, e.g. A1,A10")
    verify.add_argument("--output", default=None,
                        help="directory for artifacts and acceptance.csv")
    verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
