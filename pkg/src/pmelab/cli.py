"""Command-line front end: ``pmelab <subcommand> [--config FILE] [--out DIR]``.

Exit codes: 0 all checks pass, 1 a check failed (or its hypothesis was not
met), 2 configuration or usage error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analytic
from . import experiments as ex
from .core import PotentialSpec, RegionBall
from .solver import SolverError
from .svgplot import log_linear_svg
from .transforms import RegimeError

logger = logging.getLogger("pmelab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

SECTIONS: dict[str, tuple[str, ...]] = {
    "scenario": (
        "command", "m", "dim", "a", "k", "k_prime", "gamma", "c0", "c0_scan", "C1", "C2", "x0", "t0", "t1",
        "end_time", "snapshot_dt", "initial", "initial_center", "initial_radius", "initial_height",
        "hypothesis_factor", "bound_C", "ball_C", "compact_radius", "support_rel_threshold", "l1_tol", "seed",
    ),
    "solver": ("cfl_fraction", "support_guard", "positivity_floor", "max_dt"),
    "grid": ("lower", "upper", "cells"),
    "potential": ("form", "b", "coeffs"),
    "output": ("plot", "csv"),
}
_SECTION_OF = {key: sec for sec, keys in SECTIONS.items() for key in keys}
assert set(_SECTION_OF) == set(ex.ScenarioConfig.field_names())
_TYPES = {f.name: f.type for f in fields(ex.ScenarioConfig)}
_DEFAULTS = ex.ScenarioConfig().to_dict()


# --------------------------------------------------------------------------
# Config text format
# --------------------------------------------------------------------------
def _parse_value(key: str, text: str):
    typ = _TYPES[key]
    text = text.strip()
    optional = typ.endswith("| None")
    if optional and text.lower() == "none":
        return None
    base = typ.replace(" | None", "")
    try:
        if base == "float":
            return float(text)
        if base == "int":
            return int(text)
        if base == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if base.startswith("tuple"):
            return tuple(float(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ex.ConfigError(f"key {key!r}: cannot read {text!r} as {typ}") from None


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(c)) for c in v)
    return str(v)


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def parse_config(text: str, source: str = "<config>") -> ex.ScenarioConfig:
    """Parse config text; unknown sections or keys and duplicates are errors."""
    cp = configparser.ConfigParser(strict=True, interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep C1, C2 case
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ex.ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ex.ConfigError(f"{source}: unknown section [{section}]; expected one of {list(SECTIONS)}")
        for key, raw in cp.items(section):
            if _SECTION_OF.get(key) != section:
                line = _line_of(text, section, key)
                where = f" (line {line})" if line else ""
                hint = f"; it belongs in [{_SECTION_OF[key]}]" if key in _SECTION_OF else ""
                raise ex.ConfigError(f"{source}{where}: unknown key {key!r} in [{section}]{hint}")
            values[key] = _parse_value(key, raw)
    return ex.ScenarioConfig(**values)


def load_config(path, overrides=()) -> ex.ScenarioConfig:
    """Read and validate a config file; ``overrides`` are ``key=value`` strings."""
    path = _resolve_config(path)
    cfg = parse_config(path.read_text(), str(path))
    if overrides:
        d = cfg.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ex.ConfigError(f"override {item!r} is not key=value")
            key, raw = (s.strip() for s in item.split("=", 1))
            if key not in _TYPES:
                raise ex.ConfigError(f"unknown key {key!r} in override")
            d[key] = _parse_value(key, raw)
        cfg = ex.ScenarioConfig(**d)
    return cfg.validate()


def serialize(cfg: ex.ScenarioConfig) -> str:
    d = cfg.to_dict()
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        out += [f"{k} = {_format_value(d[k])}" for k in keys]
        out.append("")
    return "\n".join(out)


def bundled_configs() -> list[Path]:
    root = resources.files("pmelab") / "configs"
    return sorted(Path(str(p)) for p in root.iterdir() if str(p).endswith(".cfg"))


def _resolve_config(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    for b in bundled_configs():
        if b.name == p.name or b.stem == p.name:
            return b
    raise ex.ConfigError(f"config file not found: {path}")


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------
class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> Path:
        p = self.out / name
        p.write_text(content)
        self.files.append(name)
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(ex._jsonable(obj), indent=2, sort_keys=True) + "\n")

    def manifest(self, cfg_dict, outcome: str, checks: dict, stages: dict, seed: int = 0, message: str = ""):
        files = sorted(self.files + ["manifest.json"])
        man = {
            "tool": "pmelab",
            "version": __version__,
            "config": cfg_dict,
            "artifacts": files,
            "wall_clock_seconds": stages,
            "outcome": outcome,
            "checks": checks,
            "seed": seed,
            "message": message,
        }
        (self.out / "manifest.json").write_text(json.dumps(ex._jsonable(man), indent=2, sort_keys=True) + "\n")


def _exit_for(outcome: str) -> int:
    return {ex.PASS: EXIT_OK, ex.FAIL: EXIT_FAIL, ex.HYPOTHESIS_NOT_MET: EXIT_FAIL}.get(outcome, EXIT_ABORT)


def _print_report(rep: ex.Report) -> None:
    print(f"{rep.scenario}: {rep.outcome}" + (f" ({rep.message})" if rep.message else ""))
    for name, ok in rep.checks.items():
        print(f"  {name}: {'PASS' if ok else 'FAIL'}")


# --------------------------------------------------------------------------
# Scenario runners
# --------------------------------------------------------------------------
def run_scenario(cfg: ex.ScenarioConfig, out: Path, quiet: bool = False) -> tuple[str, int]:
    """Run one validated config, write its artifacts, return (outcome, exit code)."""
    np.random.seed(cfg.seed)
    w = _Writer(out)
    w.text("config.cfg", serialize(cfg))
    stages: dict[str, float] = {}
    t0 = time.perf_counter()
    try:
        rep = _dispatch_scenario(cfg, w)
    except (SolverError, ValueError) as exc:
        if isinstance(exc, (ex.ConfigError, RegimeError)):
            raise
        stages["run"] = time.perf_counter() - t0
        msg = f"{type(exc).__name__}: {exc}"
        rep = ex.Report(cfg.command, ex.ERROR, {}, {}, msg)
        w.json("report.json", rep.to_dict())
        w.manifest(cfg.to_dict(), ex.ERROR, {}, stages, cfg.seed, msg)
        if not quiet:
            print(f"{cfg.command}: ERROR ({msg})", file=sys.stderr)
        return ex.ERROR, EXIT_ABORT
    stages["run"] = time.perf_counter() - t0
    w.json("report.json", rep.to_dict())
    w.manifest(cfg.to_dict(), rep.outcome, rep.checks, stages, cfg.seed, rep.message)
    if not quiet:
        _print_report(rep)
    return rep.outcome, _exit_for(rep.outcome)


def _dispatch_scenario(cfg: ex.ScenarioConfig, w: _Writer) -> ex.Report:
    cmd = cfg.command
    if cmd == "solve":
        traj, rep = ex.run_solve(cfg)
        if cfg.csv:
            for p in traj.export(w.out, "field"):
                w.files.append(Path(p).name)
        return rep
    if cmd == "lemma34":
        return ex.run_lemma34(cfg)
    if cmd == "eq2":
        rep = ex.run_eq2_diagnostics(cfg)
        if cfg.csv:
            rows = ["t,mass_support_radius"]
            M = rep.measured
            rows += [f"{t!r},{r!r}" for t, r in zip(M["times"], M["support_radius"])]
            w.text("support.csv", "\n".join(rows) + "\n")
        return rep
    if cmd == "lemma35":
        return ex.run_lemma35_scan(cfg) if cfg.c0_scan else ex.run_lemma35(cfg)
    if cmd == "converge":
        rate, rep = ex.run_convergence(cfg)
        w.json("rate.json", rate.to_dict())
        if cfg.csv:
            w.text("distances.csv", rate.series_csv())
        if cfg.plot:
            svg = log_linear_svg(
                rate.times,
                {"d_pos": rate.d_pos, "d_gamma": rate.d_gamma},
                title=f"free boundary distance, m={cfg.m:g}",
            )
            w.text("distances.svg", svg)
        return rep
    raise ex.ConfigError(f"unknown command {cmd!r}")


def _run_barrier(args, out: Path) -> int:
    C1 = args.C1
    if C1 is None:
        C1 = PotentialSpec("quadratic").c2_norm(RegionBall((0.0,) * args.dim, 1.0))
    w = _Writer(out)
    t0 = time.perf_counter()
    rep = analytic.certify_barrier(args.m, args.dim, args.a, C1, refine=args.refine, cells=args.cells)
    stages = {"run": time.perf_counter() - t0}
    w.json("barrier.json", rep.to_dict())
    rows = ["h,dt,exact_max_abs,barrier_max,tol,certified"]
    rows += [
        f"{r['h']!r},{r['dt']!r},{r['exact_max_abs']!r},{r['barrier_max']!r},{r['tol']!r},{int(r['certified'])}"
        for r in rep.levels
    ]
    w.text("refinement.csv", "\n".join(rows) + "\n")
    outcome = ex.PASS if rep.passed else ex.FAIL
    checks = {
        "levels_certified": all(r["certified"] for r in rep.levels),
        "order": bool(rep.order >= 0.8),
        "gradient_bound": bool(rep.gradient_bound["passed"]),
    }
    cfg_dict = {"m": args.m, "dim": args.dim, "a": args.a, "C1": C1, "refine": args.refine, "cells": args.cells}
    w.manifest(cfg_dict, outcome, checks, stages)
    print(f"{'h':>12} {'dt':>10} {'exact |R|':>12} {'barrier max R':>14} {'tol':>12}  ok")
    for r in rep.levels:
        print(
            f"{r['h']:12.5g} {r['dt']:10.4g} {r['exact_max_abs']:12.4e} {r['barrier_max']:14.4e} "
            f"{r['tol']:12.4e}  {'yes' if r['certified'] else 'no'}"
        )
    print(f"order {rep.order:.3f}; gradient bound {'PASS' if rep.gradient_bound['passed'] else 'FAIL'}")
    print(f"barrier-check: {outcome}")
    return _exit_for(outcome)


def _suite_one(path: str, out: str) -> tuple[str, str, int, str]:
    stem = Path(path).stem
    try:
        cfg = load_config(path)
    except (ex.ConfigError, RegimeError) as exc:
        return stem, "CONFIG_ERROR", EXIT_USAGE, str(exc)
    outcome, code = run_scenario(cfg, Path(out) / stem, quiet=True)
    return stem, outcome, code, ""


def _run_suite(args, out: Path) -> int:
    paths = sorted(Path(args.config_dir).glob("*.cfg")) if args.config_dir else bundled_configs()
    if not paths:
        raise ex.ConfigError("no .cfg files found for the suite")
    t0 = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_suite_one, [str(p) for p in paths], [str(out)] * len(paths)))
    else:
        results = [_suite_one(str(p), str(out)) for p in paths]
    results.sort()
    w = _Writer(out)
    summary = {stem: {"outcome": o, "exit_code": c, "message": m} for stem, o, c, m in results}
    w.json("summary.json", summary)
    for stem, o, _, m in results:
        print(f"{stem}: {o}" + (f" ({m})" if m else ""))
    codes = [c for _, _, c, _ in results]
    code = EXIT_ABORT if EXIT_ABORT in codes else EXIT_USAGE if EXIT_USAGE in codes else max(codes)
    overall = ex.PASS if code == EXIT_OK else ex.ERROR if code in (EXIT_ABORT, EXIT_USAGE) else ex.FAIL
    w.manifest({"configs": [p.name for p in paths], "jobs": args.jobs}, overall,
               {s: o == ex.PASS for s, o, _, _ in results}, {"suite": time.perf_counter() - t0})
    return code


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------
def _defaults_epilog() -> str:
    lines = ["config keys and defaults:"]
    for section, keys in SECTIONS.items():
        lines.append(f"  [{section}]")
        lines += [f"    {k} = {_format_value(_DEFAULTS[k])}" for k in keys]
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="pmelab", description="Porous medium equation experiments.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"pmelab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", parser_class=_Parser)
    default_out = os.environ.get("PMELAB_OUT", "pmelab_out")
    helps = {
        "solve": "evolve configured initial data and check balance laws",
        "lemma34": "mass on a small ball implies a pressure lower bound",
        "eq2": "signed equation with a sink: containment, mass slope, domination",
        "lemma35": "small mass implies a small sup after logarithmic time",
        "converge": "exponential approach of the free boundary to equilibrium",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text, epilog=_defaults_epilog(), formatter_class=fmt)
        p.add_argument("--config", required=True, help="config file (path or bundled name)")
        p.add_argument("--out", default=None, help=f"output directory (default {default_out}/{name})")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p = sub.add_parser("barrier-check", help="certify the drained Barenblatt barrier", formatter_class=fmt)
    p.add_argument("--m", type=float, default=1.5)
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--a", type=float, default=0.1)
    p.add_argument("--C1", type=float, default=None, help="drift constant (default: quadratic potential on B_1)")
    p.add_argument("--refine", type=int, default=3)
    p.add_argument("--cells", type=int, default=80)
    p.add_argument("--out", default=None, help=f"output directory (default {default_out}/barrier-check)")
    p = sub.add_parser("suite", help="run every config in a directory", formatter_class=fmt)
    p.add_argument("--config-dir", default=None, help="directory of .cfg files (default: bundled configs)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help=f"output directory (default {default_out}/suite)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.cmd:
        parser.print_usage(sys.stderr)
        print("pmelab: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out) if args.out else Path(os.environ.get("PMELAB_OUT", "pmelab_out")) / args.cmd
    try:
        if args.cmd == "barrier-check":
            if not (args.m > 1 and args.a > 0 and args.refine >= 2 and args.cells >= 8):
                raise ex.ConfigError("need m > 1, a > 0, refine >= 2 and cells >= 8")
            return _run_barrier(args, out)
        if args.cmd == "suite":
            if args.jobs < 1:
                raise ex.ConfigError("--jobs must be at least 1")
            return _run_suite(args, out)
        cfg = load_config(args.config, args.set)
        if cfg.command != args.cmd:
            raise ex.ConfigError(f"config is for {cfg.command!r}, not {args.cmd!r}")
        return run_scenario(cfg, out)[1]
    except (ex.ConfigError, RegimeError) as exc:
        print(f"pmelab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def dispatch(argv) -> int:
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
