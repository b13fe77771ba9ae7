"""Command-line entry point: sectioned config files, subcommand dispatch, CSV output.

Usage::

    viscontact steady|sweep|unsteady --config run.ini --out results/ [--jobs k]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 geometry failure.
"""
import argparse
import configparser
import json
import logging
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from . import scenarios as sc
from .contact_solver import SolverParams
from .errors import ConfigError, GeometryError, NonconvergenceError, ViscontactError

log = logging.getLogger(__name__)

SUBCOMMANDS = ("steady", "sweep", "unsteady")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_GEOMETRY = 0, 2, 3, 4


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


# section -> key -> (target field, parser); solver keys go to SolverParams
_SCHEMA = {
    "bed": {"r": ("r", float)},
    "rheology": {"n": ("n", float), "A": ("A", float), "delta_reg": ("delta_reg", float)},
    "mesh": {"n_e": ("n_e", int), "n_layers": ("n_layers", int), "grading": ("grading", float),
             "H": ("H", float)},
    "bc": {"mode": ("mode", str), "u_i": ("u_i", float), "tau_b": ("tau_b", float),
           "N": ("N", float), "N_list": ("N_list", _float_list), "N0": ("N0", float),
           "amplitude": ("amplitude", float), "frequency": ("frequency", float)},
    "time": {"dt": ("dt", float), "t_end": ("t_end", float), "t_spinup": ("t_spinup", float),
             "steady_threshold": ("steady_threshold", float)},
    "solver": {"c": ("c", float), "newton_tol": ("newton_tol", float), "max_iter": ("max_iter", int),
               "continuation": ("continuation", _bool), "max_halvings": ("max_halvings", int),
               "stall_tol": ("stall_tol", float)},
    "output": {"every": ("output_every", int), "snapshot_every": ("snapshot_every", int)},
}
_REQUIRED = (("bed", "r"), ("rheology", "n"), ("bc", "N"), ("bc", "mode"))

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


@dataclass(frozen=True)
class RunConfig:
    """Parsed config file: the scenario plus CLI-only output settings."""

    scenario: sc.ScenarioConfig
    snapshot_every: int = 0
    chains: tuple = ()
    source: str = ""


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    version: str
    wall_time: float = 0.0
    files: list = field(default_factory=list)
    convergence: dict = field(default_factory=dict)
    status: str = "ok"

    def write(self, path):
        Path(path).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _line_index(text):
    """Map ``(section, key)`` and bare sections to 1-based line numbers."""
    where = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if m := _SECTION_RE.match(line):
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
        elif section and (m := _KEY_RE.match(line)):
            where.setdefault((section, m.group(1).strip()), lineno)
    return where


def parse_config(path):
    """Read a sectioned ``key = value`` file into a validated :class:`RunConfig`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def at(section, key=None):
        return f"{path}:{lines.get((section, key), lines.get((section, None), '?'))}"

    values, solver = {}, {}
    snapshot_every = 0
    chains = ()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{at(section)}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{at(section, key)}: unknown key '{key}' in [{section}]")
            name, conv = _SCHEMA[section][key]
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{at(section, key)}: bad value for {section}.{key}: {exc}") from exc
            if key == "N_list":
                chains = tuple(_float_list(part) for part in raw.split(";") if part.strip())
            if section == "solver":
                solver[name] = value
            elif name == "snapshot_every":
                snapshot_every = value
            else:
                values[name] = value
    for section, key in _REQUIRED:
        if not parser.has_option(section, key):
            raise ConfigError(f"{at(section)}: missing required key {section}.{key}")
    mode = values["mode"]
    if mode not in ("dirichlet", "neumann"):
        raise ConfigError(f"{at('bc', 'mode')}: bc.mode must be 'dirichlet' or 'neumann', got {mode!r}")
    needed = "u_i" if mode == "dirichlet" else "tau_b"
    other = "tau_b" if mode == "dirichlet" else "u_i"
    if needed not in values:
        raise ConfigError(f"{at('bc', 'mode')}: bc.mode={mode} requires bc.{needed}")
    if other in values:
        raise ConfigError(f"{at('bc', other)}: bc.{other} conflicts with bc.mode={mode}")
    try:
        scenario = sc.ScenarioConfig(**values, solver=SolverParams(**solver))
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig(scenario, snapshot_every, chains, str(path))


class _Outputs:
    """Collects written files; everything gets a ``.partial`` suffix after a failure."""

    def __init__(self, out_dir, partial=False):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.suffix = ".partial" if partial else ""
        self.files = []

    def path(self, name):
        p = self.dir / (name + self.suffix)
        self.files.append(p.name)
        return p

    def csv(self, name, header, rows):
        sc.write_csv(self.path(name), header, rows)


def _write_steady(out, res, config):
    ends = res.endpoints
    xd, xr = (ends.x_detach, ends.x_reattach) if ends else (math.nan, math.nan)
    cells = 2 * config.n_e * config.n_layers
    out.csv("steady_summary.csv", ["n_e", "cells", "tau_b", "u_b", "x_detach", "x_reattach"],
            [[config.n_e, cells, res.tau_b, res.u_b, xd, xr]])
    res.series.to_csv(out.path("steady_series.csv"))
    out.csv("roof.csv", ["t", "x", "theta"],
            [[res.series.records[-1].t if len(res.series) else 0.0, x, th]
             for x, th in zip(res.roof.x, res.roof.theta)])
    if res.solution is not None:
        x, lam = sc.multiplier_profile(res.solution, res.mesh)
        out.csv("multipliers.csv", ["x", "lambda"], list(zip(x, lam)))


def _steady_summary(res):
    iters = [r.newton_iters for r in res.series.records]
    return {"steps": res.steps, "converged": bool(res.converged),
            "max_newton_iterations": max(iters) if iters else 0}


def _run_chain(config, chain):
    return sc.sweep_sliding_law(config, chain)


def _sweep(run, jobs):
    config = run.scenario
    chains = run.chains or ((config.N_list,) if config.N_list else ())
    if not chains:
        raise ConfigError(f"{run.source}: sweep needs bc.N_list")
    if jobs > 1 and len(chains) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_chain, [config] * len(chains), chains))
    else:
        parts = [_run_chain(config, chain) for chain in chains]
    return sorted((p for part in parts for p in part), key=lambda p: -p.N)


def dispatch(subcommand, run, out_dir, jobs=1):
    """Run one experiment and write its CSV files and ``manifest.json`` into ``out_dir``."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; expected one of {', '.join(SUBCOMMANDS)}")
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if isinstance(run, sc.ScenarioConfig):
        run = RunConfig(run)
    config = run.scenario
    manifest = RunManifest(subcommand, sc.config_dict(config), __version__)
    start = time.perf_counter()
    try:
        if subcommand == "steady":
            res = sc.run_steady(config)
            out = _Outputs(out_dir)
            _write_steady(out, res, config)
            manifest.convergence = _steady_summary(res)
        elif subcommand == "sweep":
            points = _sweep(run, jobs)
            out = _Outputs(out_dir)
            out.csv("sliding_law.csv", ["N", "u_b", "tau_b", "u_b_scaled", "tau_scaled", "V"],
                    sc.sweep_rows(points))
            manifest.convergence = {"points": len(points),
                                    "failed_N": [p.N for p in points if not p.converged]}
            try:
                manifest.convergence["c0"] = sc.fit_c0(points, config.n, config.r, config.A)
            except ConfigError as exc:
                log.info("no c0 fit: %s", exc)
        else:
            res = sc.run_unsteady(config, N0=config.N0 or config.N, snapshot_every=run.snapshot_every)
            out = _Outputs(out_dir)
            _write_unsteady(out, res)
            manifest.convergence = {"initial": _steady_summary(res.initial), "tau_b0": res.tau_b0,
                                    "steps": len(res.series)}
    except ViscontactError as exc:
        partial = getattr(exc, "result", None)
        if partial is not None:
            out = _Outputs(out_dir, partial=True)
            if isinstance(partial, sc.SteadyResult):
                _write_steady(out, partial, config)
            else:
                _write_unsteady(out, partial)
            manifest.status = f"failed: {exc}"
            manifest.wall_time = time.perf_counter() - start
            manifest_path = out.path("manifest.json")
            manifest.files = list(out.files)
            manifest.write(manifest_path)
        raise
    manifest.wall_time = time.perf_counter() - start
    manifest_path = out.path("manifest.json")
    manifest.files = list(out.files)
    manifest.write(manifest_path)
    return manifest


def _write_unsteady(out, res):
    res.series.to_csv(out.path("unsteady_series.csv"))
    if res.roof_snapshots:
        out.csv("roof_snapshots.csv", ["t", "x", "theta"],
                [[t, xi, th] for t, x, theta in res.roof_snapshots for xi, th in zip(x, theta)])


def build_parser():
    parser = argparse.ArgumentParser(prog="viscontact", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="sectioned key = value file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep chains")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = parse_config(args.config)
        manifest = dispatch(args.subcommand, run, args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"geometry failure: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (NonconvergenceError, ViscontactError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"{args.subcommand}: wrote {len(manifest.files)} files to {args.out} "
          f"in {manifest.wall_time:.1f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
