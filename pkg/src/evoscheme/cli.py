"""Command-line front end.

::

    evoscheme evolve {fd|rk|ab} [flags]
    evoscheme audit <file> --order N
    evoscheme validate <files...> --reference NAME [--h0 H --ratio R --rungs N]
    evoscheme sensitivity --axis NAME --grid V1,V2,...

Settings can also come from a ``key=value`` file given with ``--config``;
command-line flags take precedence over it. Output directories are created
under ``$EVOSCHEME_OUTPUT`` (default ``./evoscheme-output``) unless ``--out``
names one explicitly.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import de, experiments, tables
from .conditions import (
    ab_moment_check,
    max_order_for_stage,
    moment_report_csv,
    residual_report_csv,
    taylor_moment_check,
)
from .fitness import InitialValueProblem, builtin_targets
from .schemes import (
    ButcherTableau,
    MultistepScheme,
    SchemeFormatError,
    StencilScheme,
    StencilTemplate,
    load_scheme,
    save_scheme,
)
from .validation import Ladder, compare_schemes

log = logging.getLogger("evoscheme")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
OUTPUT_ENV = "EVOSCHEME_OUTPUT"

SETTING_KEYS = ("population_size", "cr0", "f0", "stall_generations", "max_generations",
                "reinjection_count", "seed")
INT_KEYS = {"population_size", "stall_generations", "max_generations", "reinjection_count",
            "seed", "runs", "order", "stage", "k", "n_train", "jobs", "starter_order"}
FLOAT_KEYS = {"cr0", "f0", "step"}
BOOL_KEYS = {"center", "paper_budget"}


class ConfigError(Exception):
    pass


def read_config(path) -> dict:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"config key {key!r} expects a number, got {value!r}") from None
    if key in BOOL_KEYS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r} expects true/false, got {value!r}")
    return value


def merged_options(args) -> dict:
    """Config-file values overridden by any flag the user actually gave."""
    opts = {}
    if getattr(args, "config", None):
        opts.update(read_config(args.config))
    for key, value in vars(args).items():
        if key in ("config", "func", "command", "family", "verbose") or value is None:
            continue
        opts[key] = value
    return {k: _coerce(k, v) for k, v in opts.items()}


def _settings(base: de.DeSettings, opts: dict) -> de.DeSettings:
    changes = {k: opts[k] for k in SETTING_KEYS if k in opts}
    if "max_generations" in changes and "stall_generations" not in changes:
        # a shorter run budget shrinks the default stall window with it
        changes["stall_generations"] = min(base.stall_generations, changes["max_generations"])
    try:
        return base.replace(**changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _output_dir(opts: dict, name: str) -> Path:
    if opts.get("out"):
        path = Path(opts["out"])
    else:
        path = Path(os.environ.get(OUTPUT_ENV, "evoscheme-output")) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_config_snapshot(path: Path, opts: dict, settings: de.DeSettings) -> None:
    snapshot = {**{k: v for k, v in opts.items() if k != "out"},
                **{k: getattr(settings, k) for k in SETTING_KEYS}}
    lines = [f"{k}={','.join(map(str, v)) if isinstance(v, list) else v}"
             for k, v in sorted(snapshot.items())]
    (path / "config.txt").write_text("\n".join(lines) + "\n")


def _fd_problem(opts: dict) -> experiments.FdProblem:
    kind = opts.get("kind", "central")
    order = opts.get("order")
    try:
        if kind == "central":
            template = StencilTemplate.central(2 if order is None else order,
                                               bool(opts.get("center", False)))
        elif kind == "forward":
            template = StencilTemplate.forward(1 if order is None else order)
        elif kind == "custom":
            offsets = opts.get("offsets")
            if not offsets:
                raise ConfigError("custom templates need --offsets")
            if isinstance(offsets, str):
                offsets = [int(v) for v in offsets.split(",")]
            template = StencilTemplate.custom(offsets, order)
        else:
            raise ConfigError(f"unknown template kind {kind!r}")
    except ValueError as exc:
        raise ConfigError(f"invalid template: {exc}") from None
    return experiments.FdProblem(template, opts.get("n_train", experiments.FD_TRAINING_POINTS),
                                 opts.get("step"))


def _problem_and_settings(family: str, opts: dict):
    try:
        if family == "fd":
            return _fd_problem(opts), _settings(experiments.FD_SETTINGS, opts), 10
        if family == "ab":
            problem = experiments.AbProblem(opts.get("k", 2),
                                            opts.get("n_train", experiments.AB_TRAINING_POINTS),
                                            opts.get("starter_order"))
            return problem, _settings(experiments.AB_SETTINGS, opts), 10
        if family == "rk":
            stage = opts.get("stage", 3)
            order = opts.get("order", max_order_for_stage(stage))
            problem = experiments.RkProblem(stage, order)
            if order == 5:
                base = (experiments.RK5_PAPER_SETTINGS if opts.get("paper_budget")
                        else experiments.RK5_DESK_SETTINGS)
                if not opts.get("paper_budget"):
                    log.warning("order-5 runs use the desk budget (stall 2000, max 20000); "
                                "pass --paper-budget for stall 10000, max 100000")
            else:
                base = experiments.RK_SETTINGS
            return problem, _settings(base, opts), 100
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown family {family!r}")


def cmd_evolve(args) -> int:
    opts = merged_options(args)
    family = args.family
    problem, settings, default_runs = _problem_and_settings(family, opts)
    runs = opts.get("runs", default_runs)
    out = _output_dir(opts, f"evolve-{family}-{problem.describe()}-seed{settings.seed}")
    _write_config_snapshot(out, {**opts, "family": family, "runs": runs}, settings)

    report = experiments.evolve(problem, settings, runs, opts.get("jobs", 1))

    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)
    for j, rec in enumerate(report.records):
        (runs_dir / f"run_{j:03d}.json").write_text(rec.to_json() + "\n")
        (runs_dir / f"run_{j:03d}.csv").write_text(rec.to_csv())
    save_scheme(report.winner_scheme, out / "winner.json")
    (out / "table.csv").write_text(report.table_csv())
    (out / "summary.json").write_text(experiments.summary_json(report) + "\n")
    if family == "rk":
        (out / "audit.csv").write_text(residual_report_csv(report.winner_scheme, problem.order))
        (out / "boxplot.csv").write_text(report.boxplot_csv())

    print(f"winner: run {report.winner_index} (seed {report.winner.settings.seed}), "
          f"fitness {report.winner_fitness:.17g}")
    if report.coefficient_error is not None:
        print(f"coefficient error vs {report.theory_label}: {report.coefficient_error:.17g}")
    if family == "rk":
        print(f"order-condition residual sum: {report.residual_sum():.17g}")
    print(f"output: {out}")
    if report.all_diverged:
        log.error("every run diverged")
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        scheme = load_scheme(args.file)
    except SchemeFormatError as exc:
        raise ConfigError(str(exc)) from None
    except OSError as exc:
        raise ConfigError(f"cannot read {args.file}: {exc.strerror}") from None
    order = args.order
    if isinstance(scheme, ButcherTableau):
        if not 1 <= order <= 5:
            raise ConfigError(f"order conditions are available for orders 1..5, got {order}")
        text = residual_report_csv(scheme, order)
    elif isinstance(scheme, StencilScheme):
        text = moment_report_csv(taylor_moment_check(scheme, order), start=0)
    else:
        text = moment_report_csv(ab_moment_check(scheme, order), start=1)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _compatible(scheme, reference) -> bool:
    if isinstance(scheme, StencilScheme):
        return not isinstance(reference, InitialValueProblem)
    return True


def cmd_validate(args) -> int:
    targets = builtin_targets()
    if args.reference not in targets:
        raise ConfigError(f"unknown reference {args.reference!r}; choose from {sorted(targets)}")
    reference = targets[args.reference]
    schemes = {}
    for name in args.files:
        try:
            scheme = load_scheme(name)
        except SchemeFormatError as exc:
            raise ConfigError(str(exc)) from None
        except OSError as exc:
            raise ConfigError(f"cannot read {name}: {exc.strerror}") from None
        if not _compatible(scheme, reference):
            raise ConfigError(f"{name}: a stencil cannot be validated against {args.reference!r}")
        label = Path(name).stem
        if label in schemes:
            label = f"{Path(name).parent.name}/{label}"
        while label in schemes:
            label += "'"
        schemes[label] = scheme
    try:
        ladder = Ladder(args.h0, args.ratio, args.rungs)
        report = compare_schemes(schemes, reference, args.location, ladder)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    opts = {"out": args.out}
    out = _output_dir(opts, f"validate-{args.reference}")
    (out / "sweep.csv").write_text(report.to_csv())
    (out / "orders.json").write_text(report.estimates_json() + "\n")
    for name, est in report.estimates.items():
        slope = "indeterminate" if est.indeterminate else f"{est.slope:.6f}"
        print(f"{name}: slope {slope} ({est.points_used} points, {est.floor_excluded} below floor)")
    print(f"output: {out}")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    opts = merged_options(args)
    try:
        grid = [float(v) for v in str(opts["grid"]).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--grid must be a comma-separated list of numbers, got {opts['grid']!r}") from None
    if not grid:
        raise ConfigError("--grid must not be empty")
    opts.setdefault("kind", "central")
    opts.setdefault("order", 6)
    opts.setdefault("n_train", 200)
    problem = _fd_problem(opts)
    settings = _settings(experiments.FD_SETTINGS, opts)
    axis = opts["axis"]
    try:
        rows = experiments.sensitivity(axis, grid, problem, settings, opts.get("runs", 1),
                                       opts.get("jobs", 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _output_dir(opts, f"sensitivity-{axis}-{problem.describe()}-seed{settings.seed}")
    _write_config_snapshot(out, opts, settings)
    (out / "sensitivity.csv").write_text(experiments.sensitivity_csv(axis, rows))
    for value, err in experiments.best_per_value(rows).items():
        print(f"{axis}={value:g}: best coefficient error {err:.6e}")
    print(f"output: {out}")
    return EXIT_OK


def _add_run_flags(p):
    p.add_argument("--config", help="key=value settings file; flags override it")
    p.add_argument("--population-size", "--np", dest="population_size", type=int)
    p.add_argument("--cr0", type=float)
    p.add_argument("--f0", type=float)
    p.add_argument("--stall-generations", "--stall", dest="stall_generations", type=int)
    p.add_argument("--max-generations", "--max-gen", dest="max_generations", type=int)
    p.add_argument("--reinjection-count", dest="reinjection_count", type=int)
    p.add_argument("--seed", type=int, help="master seed; run j uses seed + j")
    p.add_argument("--runs", type=int, help="number of independent runs")
    p.add_argument("--jobs", type=int, help="worker processes for independent runs")
    p.add_argument("--out", help="output directory")


def _add_fd_flags(p):
    p.add_argument("--kind", choices=["central", "forward", "custom"])
    p.add_argument("--order", type=int)
    p.add_argument("--center", action="store_const", const=True,
                   help="central templates: include the f(x) term")
    p.add_argument("--offsets", help="custom templates: comma-separated integer offsets")
    p.add_argument("--n-train", dest="n_train", type=int, help="number of training points")
    p.add_argument("--step", type=float, help="sample step of the target function")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoscheme", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    evolve = sub.add_parser("evolve", help="evolve scheme coefficients")
    fam = evolve.add_subparsers(dest="family", required=True)
    fd = fam.add_parser("fd", help="finite-difference stencil")
    _add_run_flags(fd)
    _add_fd_flags(fd)
    rk = fam.add_parser("rk", help="explicit Runge-Kutta tableau")
    _add_run_flags(rk)
    rk.add_argument("--stage", type=int)
    rk.add_argument("--order", type=int)
    rk.add_argument("--paper-budget", dest="paper_budget", action="store_const", const=True,
                    help="order 5: stall 10000 / max 100000 generations")
    ab = fam.add_parser("ab", help="Adams-Bashforth weights")
    _add_run_flags(ab)
    ab.add_argument("--k", type=int)
    ab.add_argument("--n-train", dest="n_train", type=int)
    ab.add_argument("--starter-order", dest="starter_order", type=int)
    for p in (fd, rk, ab):
        p.set_defaults(func=cmd_evolve)

    audit = sub.add_parser("audit", help="order-condition or moment audit of a scheme file")
    audit.add_argument("file")
    audit.add_argument("--order", type=int, required=True)
    audit.add_argument("--out", help="also write the report to this CSV file")
    audit.set_defaults(func=cmd_audit)

    val = sub.add_parser("validate", help="step-size convergence sweep")
    val.add_argument("files", nargs="+")
    val.add_argument("--reference", required=True)
    val.add_argument("--h0", type=float, default=0.1)
    val.add_argument("--ratio", type=float, default=0.5)
    val.add_argument("--rungs", type=int, default=10)
    val.add_argument("--location", type=float)
    val.add_argument("--out")
    val.set_defaults(func=cmd_validate)

    sens = sub.add_parser("sensitivity", help="vary one setting of a central-6 FD evolution")
    sens.add_argument("--axis", required=True, choices=list(experiments.AXES))
    sens.add_argument("--grid", required=True)
    _add_run_flags(sens)
    _add_fd_flags(sens)
    sens.set_defaults(func=cmd_sensitivity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"evoscheme: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
