"""Command-line front end.

    qbm coefficients --config run.toml [--out DIR] [--kernels]
    qbm evolve       --config run.toml [--out DIR] [--engine E] [--allow-long]
    qbm decohere     --config run.toml [--out DIR] [--allow-long]
    qbm classical    --config run.toml [--out DIR] [--allow-long]
    qbm sweep        --config run.toml [--out DIR] [--workers N] [--allow-long]
    qbm preset [NAME] [--out DIR] [--workers N]

Configs are TOML with [env], [system], [initial] and [run] sections and
an optional [sweep] axis; the figure-reproduction presets ship as
packaged config files, so the reproduction suite is pure data.  Every
run is deterministic: identical configs give byte-identical CSVs.

Exit codes: 0 success, 2 invalid configuration, 3 numeric failure (the
output directory then holds an error.json diagnostic).
"""

import argparse
import concurrent.futures
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from . import __version__
from .classical import (PhaseSpaceState, evolve_fokker_planck,
                        write_phase_space_csv)
from .coefficients import (OscillatorSpec, compute_coefficients,
                           hight_constants, write_coefficient_csv)
from .diagnostics import (fringe_visibility, timescale_report,
                          write_decoherence_csv)
from .evolution import (SingleGaussian, SymmetricSuperposition, evolve_grid,
                        evolve_moments, packet_width_sq, write_trajectory_csv)
from .spectral import EnvironmentSpec, Finite, HighT, Zero, kernel_samples

ENGINES = ("moments", "grid", "fokker_planck")
OUTPUTS = ("coefficients", "trajectory", "decoherence", "timescales")

# axis name -> config section, for sweep resolution
_AXIS_SECTIONS = {
    "n": "env", "gamma0": "env", "cutoff": "env", "kt": "env", "beta": "env",
    "mass": "system", "omega": "system",
    "x0": "initial", "p0": "initial", "sigma_sq": "initial",
    "half_separation": "initial",
}


class ConfigError(ValueError):
    """Raised for anything that makes a config unrunnable; exit code 2."""


@dataclass
class RunConfig:
    env: EnvironmentSpec
    sys: OscillatorSpec
    initial: object
    engine: str
    t_end: float
    outputs: tuple
    output_dir: Path
    dt: Optional[float] = None
    samples: int = 2000
    shift_mode: str = "full"
    frequency: str = "bare"
    uncertainty: str = "warn"
    allow_long: bool = False
    n_points: int = 256
    l_box: Optional[float] = None
    sweep_axis: Optional[str] = None
    sweep_values: tuple = ()

    @property
    def t_sat(self):
        return math.inf if self.env.gamma0 == 0.0 else 1.0 / self.env.gamma0


def _require(table, key, kind, where):
    if key not in table:
        raise ConfigError(f"[{where}] is missing '{key}'")
    v = table[key]
    if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if kind is str and isinstance(v, str):
        return v
    raise ConfigError(f"[{where}] {key} = {v!r} is not a {kind.__name__}")


def _parse_env(table):
    n = _require(table, "n", float, "env")
    gamma0 = _require(table, "gamma0", float, "env")
    cutoff = _require(table, "cutoff", float, "env")
    label = _require(table, "temperature", str, "env")
    if label == "zero":
        temp = Zero()
    elif label == "high":
        temp = HighT(_require(table, "kt", float, "env"))
    elif label == "finite":
        temp = Finite(_require(table, "beta", float, "env"))
    else:
        raise ConfigError(f"[env] temperature must be zero, high or finite, "
                          f"got {label!r}")
    mass_ref = float(table.get("mass_ref", 1.0))
    try:
        return EnvironmentSpec(n, gamma0, cutoff, temp, mass_ref)
    except ValueError as exc:
        raise ConfigError(f"[env] {exc}") from exc


def _parse_system(table):
    try:
        return OscillatorSpec(float(table.get("mass", 1.0)),
                              float(table.get("omega", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"[system] {exc}") from exc


def _parse_initial(table):
    kind = _require(table, "kind", str, "initial")
    sigma_sq = table.get("sigma_sq")
    if sigma_sq is not None:
        sigma_sq = float(sigma_sq)
    try:
        if kind == "gaussian":
            return SingleGaussian(float(table.get("x0", 0.0)),
                                  float(table.get("p0", 0.0)), sigma_sq)
        if kind == "superposition":
            return SymmetricSuperposition(
                _require(table, "half_separation", float, "initial"), sigma_sq)
    except ValueError as exc:
        raise ConfigError(f"[initial] {exc}") from exc
    raise ConfigError(f"[initial] kind must be gaussian or superposition, "
                      f"got {kind!r}")


def _choice(table, key, allowed, default):
    v = table.get(key, default)
    if v not in allowed:
        raise ConfigError(f"[run] {key} must be one of {allowed}, got {v!r}")
    return v


def parse_config(raw, out_override=None, engine_override=None,
                 allow_long=False):
    """Builds a RunConfig from a parsed TOML dict; ConfigError on any
    missing or ill-typed field."""
    for section in ("env", "system", "initial", "run"):
        if section not in raw or not isinstance(raw[section], dict):
            raise ConfigError(f"config is missing the [{section}] section")
    env = _parse_env(raw["env"])
    sys_ = _parse_system(raw["system"])
    initial = _parse_initial(raw["initial"])
    run = raw["run"]
    engine = engine_override or _choice(run, "engine", ENGINES, "moments")
    t_end = _require(run, "t_end", float, "run")
    if t_end <= 0.0:
        raise ConfigError(f"[run] t_end must be positive, got {t_end}")
    outputs = run.get("outputs")
    if not isinstance(outputs, list) or not outputs:
        raise ConfigError("[run] outputs must be a non-empty list")
    for o in outputs:
        if o not in OUTPUTS:
            raise ConfigError(f"[run] unknown output {o!r}; "
                              f"choose from {OUTPUTS}")
    if engine == "fokker_planck":
        banned = {"decoherence", "timescales"} & set(outputs)
        if banned:
            raise ConfigError(f"engine fokker_planck cannot produce "
                              f"{sorted(banned)}: those quantify quantum "
                              f"coherence")
        if not isinstance(initial, SingleGaussian):
            raise ConfigError("engine fokker_planck takes a gaussian "
                              "initial state")
    if {"decoherence", "timescales"} & set(outputs) and \
            not isinstance(initial, SymmetricSuperposition):
        raise ConfigError("decoherence outputs need a superposition "
                          "initial state")
    dt = run.get("dt")
    if dt is not None:
        dt = float(dt)
        if dt <= 0.0:
            raise ConfigError(f"[run] dt must be positive, got {dt}")
    cfg = RunConfig(
        env=env, sys=sys_, initial=initial, engine=engine, t_end=t_end,
        outputs=tuple(outputs),
        output_dir=Path(out_override or run.get("output_dir", "qbm-run")),
        dt=dt,
        samples=int(run.get("samples", 2000)),
        shift_mode=_choice(run, "shift_mode", ("full", "off"), "full"),
        frequency=_choice(run, "frequency", ("bare", "renormalized"), "bare"),
        uncertainty=_choice(run, "uncertainty", ("warn", "raise", "ignore"),
                            "warn"),
        allow_long=allow_long or bool(run.get("allow_long", False)),
        n_points=int(run.get("n_points", 256)),
        l_box=float(run["l_box"]) if "l_box" in run else None,
    )
    if cfg.samples < 2:
        raise ConfigError(f"[run] samples must be >= 2, got {cfg.samples}")
    if "sweep" in raw:
        sw = raw["sweep"]
        axis = _require(sw, "axis", str, "sweep")
        if axis not in _AXIS_SECTIONS:
            raise ConfigError(f"[sweep] unknown axis {axis!r}; numeric "
                              f"fields: {sorted(_AXIS_SECTIONS)}")
        values = sw.get("values")
        if not isinstance(values, list) or not values or \
                not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                        for v in values):
            raise ConfigError("[sweep] values must be a non-empty numeric "
                              "list")
        cfg.sweep_axis = axis
        cfg.sweep_values = tuple(float(v) for v in values)
    if cfg.t_end > cfg.t_sat and not cfg.allow_long:
        raise ConfigError(
            f"t_end = {cfg.t_end:g} exceeds the weak-coupling window "
            f"t_sat = 1/gamma0 = {cfg.t_sat:g}; pass --allow-long to run "
            f"anyway")
    return cfg


def config_as_dict(cfg):
    """Canonical nested-dict form of a config, for echo and round-trip."""
    env = cfg.env
    e = {"n": env.n, "gamma0": env.gamma0, "cutoff": env.cutoff,
         "mass_ref": env.mass_ref}
    temp = env.temperature
    if isinstance(temp, Zero):
        e["temperature"] = "zero"
    elif isinstance(temp, HighT):
        e["temperature"] = "high"
        e["kt"] = temp.value
    elif isinstance(temp, Finite):
        e["temperature"] = "finite"
        e["beta"] = temp.beta
    else:
        raise ConfigError("engineered bath profiles are code, not config")
    ini = cfg.initial
    if isinstance(ini, SingleGaussian):
        i = {"kind": "gaussian", "x0": ini.x0, "p0": ini.p0}
    else:
        i = {"kind": "superposition",
             "half_separation": ini.half_separation}
    if ini.sigma_sq is not None:
        i["sigma_sq"] = ini.sigma_sq
    r = {"engine": cfg.engine, "t_end": cfg.t_end, "samples": cfg.samples,
         "outputs": list(cfg.outputs), "shift_mode": cfg.shift_mode,
         "frequency": cfg.frequency, "uncertainty": cfg.uncertainty,
         "allow_long": cfg.allow_long, "n_points": cfg.n_points}
    if cfg.dt is not None:
        r["dt"] = cfg.dt
    if cfg.l_box is not None:
        r["l_box"] = cfg.l_box
    out = {"env": e, "system": {"mass": cfg.sys.mass,
                                "omega": cfg.sys.omega_bare},
           "initial": i, "run": r}
    if cfg.sweep_axis is not None:
        out["sweep"] = {"axis": cfg.sweep_axis,
                        "values": list(cfg.sweep_values)}
    return out


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def dump_toml(tables):
    """Minimal TOML emitter for the flat section/key layout configs use."""
    lines = []
    for section, table in tables.items():
        lines.append(f"[{section}]")
        for k, v in table.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def _units_note(cfg):
    return (f"units: hbar = kB = 1; omega_bare = {cfg.sys.omega_bare:g}, "
            f"times in 1/omega_bare = 1 units; t_sat = {cfg.t_sat:g}")


def _classical_constants(cfg):
    """(gamma, D) for the constant-coefficient classical engine."""
    temp = cfg.env.temperature
    if isinstance(temp, Zero):
        return cfg.env.gamma0, 0.0
    return hight_constants(cfg.env, cfg.sys)


def _run_fokker_planck(cfg, out_dir, notes):
    gam, dd = _classical_constants(cfg)
    sig = packet_width_sq(cfg.initial, cfg.sys)
    state = PhaseSpaceState(cfg.initial.x0, cfg.initial.p0,
                            sig, 1.0 / (4.0 * sig))
    traj = evolve_fokker_planck(state, cfg.sys.omega_bare ** 2, gam, dd,
                                cfg.t_end, mass=cfg.sys.mass, dt=cfg.dt,
                                n_x=cfg.n_points, n_p=cfg.n_points)
    if "trajectory" in cfg.outputs:
        write_phase_space_csv(traj, out_dir / "phase_space.csv", notes)
    return traj


def run_config(cfg, kernels=False):
    """Executes one run; returns the list of artifact names written."""
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    notes = _units_note(cfg)
    artifacts = []

    (out_dir / "config.toml").write_text(dump_toml(config_as_dict(cfg)))
    artifacts.append("config.toml")

    if cfg.engine == "fokker_planck":
        if "coefficients" in cfg.outputs or kernels:
            series = compute_coefficients(cfg.env, cfg.sys, cfg.t_end,
                                          samples=cfg.samples,
                                          frequency=cfg.frequency)
            if "coefficients" in cfg.outputs:
                write_coefficient_csv(series, out_dir / "coefficients.csv")
                artifacts.append("coefficients.csv")
            if kernels:
                _write_kernels(series, out_dir / "kernels.csv")
                artifacts.append("kernels.csv")
        _run_fokker_planck(cfg, out_dir, notes)
        if "trajectory" in cfg.outputs:
            artifacts.append("phase_space.csv")
        _write_manifest(cfg, out_dir, artifacts)
        return artifacts

    series = compute_coefficients(cfg.env, cfg.sys, cfg.t_end,
                                  samples=cfg.samples,
                                  frequency=cfg.frequency)
    if "coefficients" in cfg.outputs:
        write_coefficient_csv(series, out_dir / "coefficients.csv")
        artifacts.append("coefficients.csv")
    if kernels:
        _write_kernels(series, out_dir / "kernels.csv")
        artifacts.append("kernels.csv")

    traj = None
    needs_traj = {"trajectory", "timescales"} & set(cfg.outputs)
    if needs_traj:
        if cfg.engine == "moments":
            traj = evolve_moments(series, cfg.initial, t_end=cfg.t_end,
                                  dt=cfg.dt, shift_mode=cfg.shift_mode,
                                  uncertainty_action=cfg.uncertainty)
        else:
            traj = evolve_grid(series, cfg.initial, t_end=cfg.t_end,
                               n_points=cfg.n_points, l_box=cfg.l_box,
                               dt=cfg.dt, shift_mode=cfg.shift_mode)
    if "trajectory" in cfg.outputs:
        write_trajectory_csv(traj, out_dir / "trajectory.csv", notes)
        artifacts.append("trajectory.csv")
    if "decoherence" in cfg.outputs:
        trace = fringe_visibility(series, cfg.initial.half_separation)
        write_decoherence_csv(trace, out_dir / "decoherence.csv", notes)
        artifacts.append("decoherence.csv")
    if "timescales" in cfg.outputs:
        rep = timescale_report(series, traj, cfg.initial.half_separation)
        blob = rep.as_dict()
        blob["version"] = __version__
        (out_dir / "timescales.json").write_text(json.dumps(blob, indent=2))
        artifacts.append("timescales.json")
    _write_manifest(cfg, out_dir, artifacts)
    return artifacts


def _write_kernels(series, path):
    env = series.env
    rows = kernel_samples(series.times, env)
    with open(path, "w") as fh:
        fh.write(f"# n={env.n:g} gamma0={env.gamma0:.17g} "
                 f"cutoff={env.cutoff:.17g}\n")
        fh.write("t,eta,nu\n")
        for r in rows:
            fh.write(f"{r.t:.17g},{r.eta:.17g},{r.nu:.17g}\n")


def _write_manifest(cfg, out_dir, artifacts, extra=None):
    blob = {"version": __version__, "engine": cfg.engine,
            "artifacts": artifacts, "config": config_as_dict(cfg)}
    if extra:
        blob.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(blob, indent=2))


def _apply_axis(raw, axis, value):
    out = json.loads(json.dumps(raw))  # deep copy of plain TOML data
    out[_AXIS_SECTIONS[axis]][axis] = value
    out.pop("sweep", None)
    return out


def _sweep_worker(args):
    raw, axis, value, out_dir, allow_long, engine = args
    cfg = parse_config(_apply_axis(raw, axis, value),
                       out_override=out_dir, engine_override=engine,
                       allow_long=allow_long)
    run_config(cfg)
    return str(out_dir)


def run_sweep(raw, cfg, workers=1, engine_override=None):
    """One run per axis value in its own subdirectory, plus a manifest."""
    base = cfg.output_dir
    base.mkdir(parents=True, exist_ok=True)
    axis = cfg.sweep_axis
    jobs = [(raw, axis, v, base / f"{axis}={v:g}", cfg.allow_long,
             engine_override) for v in cfg.sweep_values]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            list(pool.map(_sweep_worker, jobs))
    else:
        for job in jobs:
            _sweep_worker(job)
    manifest = {"version": __version__, "axis": axis,
                "values": list(cfg.sweep_values),
                "runs": [{"value": v, "dir": f"{axis}={v:g}"}
                         for v in cfg.sweep_values]}
    (base / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _preset_dir():
    return resources.files("qbm") / "presets"


def list_presets():
    return sorted(p.name[:-5] for p in _preset_dir().iterdir()
                  if p.name.endswith(".toml"))


def _load_config_file(path):
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")


def _fail_numeric(cfg, exc):
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = {"error": type(exc).__name__, "message": str(exc),
            "config": config_as_dict(cfg)}
    (out_dir / "error.json").write_text(json.dumps(blob, indent=2))
    print(f"error: {exc} (diagnostic in {out_dir / 'error.json'})",
          file=sys.stderr)
    return 3


def _dispatch(args):
    if args.command == "preset":
        if args.name is None:
            for name in list_presets():
                print(name)
            return 0
        path = _preset_dir() / f"{args.name}.toml"
        if not path.is_file():
            raise ConfigError(f"unknown preset {args.name!r}; run "
                              f"'qbm preset' for the list")
        raw = tomli.loads(path.read_text())
        out = args.out or f"qbm-out/{args.name}"
    else:
        raw = _load_config_file(args.config)
        out = args.out

    engine_override = getattr(args, "engine", None)
    if args.command == "coefficients":
        raw = dict(raw)
        raw["run"] = dict(raw.get("run", {}))
        raw["run"]["outputs"] = ["coefficients"]
    elif args.command == "classical":
        engine_override = "fokker_planck"

    allow_long = getattr(args, "allow_long", False)
    cfg = parse_config(raw, out_override=out,
                       engine_override=engine_override,
                       allow_long=allow_long)

    if args.command == "decohere":
        missing = {"decoherence", "timescales"} - set(cfg.outputs)
        if missing:
            raise ConfigError(f"decohere needs outputs to include "
                              f"{sorted(missing)}")

    workers = getattr(args, "workers", 1)
    if args.command == "sweep" or (args.command == "preset"
                                   and cfg.sweep_axis is not None):
        if cfg.sweep_axis is None:
            raise ConfigError("sweep needs a [sweep] section with axis "
                              "and values")
        try:
            run_sweep(raw, cfg, workers=workers,
                      engine_override=engine_override)
        except (ValueError, ArithmeticError) as exc:
            if isinstance(exc, ConfigError):
                raise
            return _fail_numeric(cfg, exc)
        return 0

    try:
        run_config(cfg, kernels=getattr(args, "kernels", False))
    except (ValueError, ArithmeticError) as exc:
        if isinstance(exc, ConfigError):
            raise
        return _fail_numeric(cfg, exc)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="qbm",
        description="Quantum Brownian motion: master-equation coefficients, "
                    "state evolution, decoherence diagnostics, and a "
                    "classical comparator.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, engine_flag=True):
        p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--allow-long", action="store_true", dest="allow_long",
                       help="permit t_end beyond t_sat = 1/gamma0")
        if engine_flag:
            p.add_argument("--engine", choices=ENGINES,
                           help="override [run] engine")

    p = sub.add_parser("coefficients",
                       help="tabulate master-equation coefficients as CSV")
    common(p, engine_flag=False)
    p.add_argument("--kernels", action="store_true",
                   help="also dump the bath kernels eta, nu")

    p = sub.add_parser("evolve", help="evolve the state and write outputs")
    common(p)

    p = sub.add_parser("decohere",
                       help="evolve and report decoherence timescales")
    common(p)

    p = sub.add_parser("classical",
                       help="run the classical phase-space comparator")
    common(p, engine_flag=False)

    p = sub.add_parser("sweep", help="run once per value of a swept axis")
    common(p)
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for sweep runs")

    p = sub.add_parser("preset",
                       help="list packaged presets, or run one by name")
    p.add_argument("name", nargs="?", help="preset name; omit to list")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--workers", type=int, default=1)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
