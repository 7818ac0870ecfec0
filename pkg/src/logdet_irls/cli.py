"""Command-line interface: ``solve``, ``experiment`` and ``report``.

Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import airls, harness, irls, linops, report
from .errors import IrlsError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------- config

def _key_line(path, section, key):
    """Line number of ``key`` inside ``[section]`` for diagnostics."""
    current = None
    for no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and line.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return no
    return None


def _read_ini(path):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (r and R differ)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"{path}: file not found") from exc
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc
    return cp


_FIELDS = {f.name: f for f in dataclasses.fields(harness.ExperimentConfig)}
_INT = {"n", "m", "r", "ell", "trials", "k_max", "base_seed", "max_iters", "R", "post_sweeps"}
_FLOAT = {"c_mf", "p", "nu0"}
_BOOL = {"timing"}


def _convert(key, value):
    if value.lower() in ("", "none", "auto"):
        if key in ("ell", "c_mf", "R"):
            return None
    if key in _INT:
        return int(value)
    if key in _FLOAT:
        return float(value)
    if key in _BOOL:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    return value


def experiment_from_section(path, cp, section):
    kw = {"name": section}
    for key, value in cp.items(section):
        line = _key_line(path, section, key)
        where = f"{path}:{line}" if line else f"{path} [{section}]"
        if key not in _FIELDS or key == "name":
            raise UsageError(f"{where}: unknown key {key!r}")
        try:
            kw[key] = _convert(key, value.strip())
        except ValueError as exc:
            raise UsageError(f"{where}: bad value for {key!r}: {exc}") from exc
    try:
        return harness.ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path} [{section}]: {exc}") from exc


def load_experiments(path):
    cp = _read_ini(path)
    if not cp.sections():
        raise UsageError(f"{path}: no experiment sections")
    return [experiment_from_section(path, cp, s) for s in cp.sections()]


# ------------------------------------------------------------------ problem

def _load_problem(path):
    """Build a problem from an INI file with a ``[problem]`` section.

    ``operator`` is ``gaussian`` or ``sampling`` (generated from ``seed`` with
    a planted rank-r reference) or ``dense`` / ``indices`` (read from
    ``operator_file`` with measurements from ``y_file``).
    """
    cp = _read_ini(path)
    if not cp.has_section("problem"):
        raise UsageError(f"{path}: missing [problem] section")
    sec = cp["problem"]
    base = Path(path).parent
    try:
        kind = sec.get("operator", "gaussian")
        n, m = sec.getint("n"), sec.getint("m")
        if n is None or m is None:
            raise UsageError(f"{path}: [problem] needs n and m")
        if kind in ("gaussian", "sampling"):
            cfg = harness.ExperimentConfig(
                n=n, m=m, r=sec.getint("r", 1), ell=sec.getint("ell", None),
                c_mf=sec.getfloat("c_mf", None), operator=kind, trials=1, k_max=0)
            return harness.make_problem(cfg, sec.getint("seed", 0)), cp
        y = report.matrix_from_csv((base / sec["y_file"]).read_text()).ravel()
        data = report.matrix_from_csv((base / sec["operator_file"]).read_text())
        if kind == "dense":
            op = linops.LinearMap.dense(data, n, m)
        elif kind == "indices":
            idx = data.astype(int)
            op = linops.LinearMap.sampling(idx[:, 0], idx[:, 1], n, m)
        else:
            raise UsageError(f"{path}: unknown operator kind {kind!r}")
        return linops.ProblemInstance(op, y), cp
    except KeyError as exc:
        raise UsageError(f"{path}: missing key {exc}") from exc
    except (ValueError, OSError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _cmd_solve(args):
    problem, cp = _load_problem(args.problem)
    sec = cp["solver"] if cp.has_section("solver") else {}
    solver = sec.get("solver", "irls")
    try:
        p = float(sec.get("p", 0.0))
        nu = float(sec.get("nu", 0.9))
        max_iters = int(sec.get("max_iters", 10_000))
        sched = irls.GammaSchedule.constant(nu)
    except ValueError as exc:
        raise UsageError(f"{args.problem} [solver]: {exc}") from exc
    if solver == "airls":
        R = sec.get("R")
        tr = airls.airls_run(problem, airls.AirlsConfig(
            p=p, R=None if R in (None, "auto") else int(R), schedule=sched,
            max_sweeps=max_iters, seed=args.seed if args.seed is not None else 0))
        X, trace = tr.X, zip(tr.gamma, tr.objective, tr.residual, tr.step)
    elif solver == "irls":
        tr = irls.irls_run(problem, irls.IrlsConfig(
            p=p, sides=sec.get("sides", "left"), schedule=sched, max_iters=max_iters))
        X, trace = tr.X, zip(tr.gamma, tr.f1, tr.residual, tr.step)
    else:
        raise UsageError(f"{args.problem}: unknown solver {solver!r}")
    Path(args.out).write_text(report.matrix_to_csv(X))
    if args.trace:
        lines = ["iteration,gamma,objective,residual_rel,step"]
        lines += [f"{i},{report.fmt(g)},{report.fmt(f)},{report.fmt(r)},{report.fmt(s)}"
                  for i, (g, f, r, s) in enumerate(trace)]
        Path(args.trace).write_text("\n".join(lines) + "\n")
    print(f"{tr.reason} after {tr.iterations} iterations")
    return EXIT_OK


def _cmd_experiment(args):
    configs = load_experiments(args.config)
    if args.section:
        configs = [c for c in configs if c.name == args.section]
        if not configs:
            raise UsageError(f"{args.config}: no section [{args.section}]")
    if len(configs) != 1:
        raise UsageError(f"{args.config}: several experiments; choose one with --section")
    cfg = configs[0]
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    if args.trials is not None:
        cfg = dataclasses.replace(cfg, trials=args.trials)
    outcomes = harness.run_experiment(cfg, workers=args.workers)
    text = report.outcomes_to_csv(outcomes)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        s = harness.summarize(outcomes)
        print(" ".join(f"{k}={v}" for k, v in s.counts.items()) + f" recovered={s.recovered}")
    return EXIT_OK


def _cmd_report(args):
    try:
        outcomes = report.outcomes_from_csv(Path(args.outcomes).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"{args.outcomes}: {exc}") from exc
    if not (args.bar or args.button):
        args.bar = args.button = True
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.outcomes).stem
    if args.bar:
        svg, csv_text = report.emit_bar(outcomes)
        (out / f"{stem}_bar.svg").write_text(svg)
        (out / f"{stem}_bar.csv").write_text(csv_text)
    if args.button:
        svg, csv_text = report.emit_button(outcomes)
        (out / f"{stem}_button.svg").write_text(svg)
        (out / f"{stem}_button.csv").write_text(csv_text)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="logdet-irls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one problem file")
    s.add_argument("problem", help="INI file with [problem] and optional [solver] sections")
    s.add_argument("--out", required=True, help="solution matrix CSV")
    s.add_argument("--trace", help="per-iteration trace CSV")
    s.add_argument("--seed", type=int, help="seed for randomized starts")
    s.set_defaults(func=_cmd_solve)

    e = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    e.add_argument("--config", required=True, help="INI file, one section per experiment")
    e.add_argument("--section", help="experiment to run when the file has several")
    e.add_argument("--out", required=True, help="outcome CSV ('-' for stdout)")
    e.add_argument("--seed", type=int, help="override base_seed")
    e.add_argument("--trials", type=int, help="override the number of trials")
    e.add_argument("--workers", type=int,
                   help=f"parallel workers (default: ${harness.WORKERS_ENV} or 1)")
    e.set_defaults(func=_cmd_experiment)

    r = sub.add_parser("report", help="render outcome tables as SVG")
    r.add_argument("outcomes", help="outcome CSV")
    r.add_argument("--bar", action="store_true", help="gamma-decline sensitivity bars")
    r.add_argument("--button", action="store_true", help="button plot of Q vs. error")
    r.add_argument("--out-dir", default=".", help="directory for the SVG and CSV files")
    r.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IrlsError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
