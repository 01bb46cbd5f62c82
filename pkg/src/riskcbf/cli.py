"""Command-line front end: ``run``, ``compare``, ``cvar`` and ``plot``.

Exit codes: 0 success, 2 configuration/validation error, 3 numerical or
infeasibility abort. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .constraints import build_constraint
from .config import SET_SCHEMA, build_safe_set, load_json, parse_cvar, parse_experiment, validate
from .cvar import wc_cvar_quadratic
from .errors import SimulationAbort, SolverError, ValidationError
from .plot import phase_portrait_svg
from .sim import run_batch, run_seed, safety_stats
from .trajectory_io import read_trajectory_csv, write_trajectory_csv

logger = logging.getLogger("riskcbf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _experiment(args):
    exp = parse_experiment(load_json(args.config))
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    if args.runs is not None:
        if args.runs < 1:
            raise ValidationError("--runs must be >= 1")
        exp = replace(exp, n_runs=args.runs)
    return exp


def _out_dir(args, exp=None) -> Path:
    out = Path(args.out or (exp.out_dir if exp and exp.out_dir else "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _aggregate(stats) -> dict:
    viol = np.array([s.violation_steps for s in stats])
    pts = np.array([s.n_points for s in stats])
    return {
        "n_runs": len(stats),
        "total_violation_steps": int(viol.sum()),
        "mean_violation_steps": float(viol.mean()),
        "violation_fraction": float(viol.sum() / pts.sum()),
        "runs_with_violation": int(np.count_nonzero(viol)),
        "min_barrier": float(min(s.min_barrier for s in stats)),
        "min_barrier_after_start": float(min(s.min_barrier_after_start for s in stats)),
        "mean_input_deviation": float(np.mean([s.mean_input_deviation for s in stats])),
    }


def _margins(spec) -> list:
    c = build_constraint(spec.safe_set, spec.plant, np.asarray(spec.x0), spec.cfg)
    return [float(v) for v in getattr(c, "margin", [])]


def cmd_run(args) -> int:
    exp = _experiment(args)
    out = _out_dir(args, exp)
    trajs = run_batch(exp.spec, exp.n_runs, exp.seed, workers=args.workers)
    stats = []
    for i, traj in enumerate(trajs):
        write_trajectory_csv(traj, out / f"trajectory_{i:03d}.csv")
        stats.append(safety_stats(traj))
    summary = {
        "controller": exp.spec.controller,
        "family": exp.raw["safe_set"]["family"],
        "base_seed": exp.seed,
        "margins": _margins(exp.spec),
        "runs": [dict(s.to_dict(), seed=run_seed(exp.seed, i)) for i, s in enumerate(stats)],
        "aggregate": _aggregate(stats),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    logger.info("wrote %d trajectories and summary.json to %s", len(trajs), out)
    return EXIT_OK


def cmd_compare(args) -> int:
    exp = _experiment(args)
    out = _out_dir(args, exp)

    def batch(controller):
        trajs = run_batch(replace(exp.spec, controller=controller), exp.n_runs, exp.seed, args.workers)
        return [safety_stats(t) for t in trajs]

    proposed, standard = batch("proposed"), batch("standard")
    runs = [
        {
            "run": i,
            "seed": run_seed(exp.seed, i),
            "proposed_violations": p.violation_steps,
            "standard_violations": s.violation_steps,
            "proposed_min_barrier": p.min_barrier,
            "standard_min_barrier": s.min_barrier,
        }
        for i, (p, s) in enumerate(zip(proposed, standard))
    ]
    summary = {
        "family": exp.raw["safe_set"]["family"],
        "base_seed": exp.seed,
        "margins": _margins(exp.spec),
        "runs": runs,
        "aggregate": {"proposed": _aggregate(proposed), "standard": _aggregate(standard)},
    }
    (out / "compare.json").write_text(json.dumps(summary, indent=2))
    agg = summary["aggregate"]
    logger.info(
        "violation steps: proposed %d, standard %d",
        agg["proposed"]["total_violation_steps"],
        agg["standard"]["total_violation_steps"],
    )
    return EXIT_OK


def cmd_cvar(args) -> int:
    loss, ms, level = parse_cvar(load_json(args.config))
    cert = wc_cvar_quadratic(loss, ms, level)
    report = {
        "value": cert.value,
        "beta": cert.beta,
        "epsilon": level.epsilon,
        "n_matrix": cert.n_matrix.tolist(),
        "status": cert.solution.status,
        "residuals": {k: (None if v is None else float(v)) for k, v in cert.solution.residuals.items()},
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_plot(args) -> int:
    doc = load_json(args.config)
    validate(doc, SET_SCHEMA)
    safe_set = build_safe_set(doc["safe_set"])
    if not args.csv:
        raise ValidationError("plot needs at least one trajectory CSV")
    trajs = [read_trajectory_csv(p) for p in args.csv]
    labels = list(args.label or [])
    labels += [Path(p).stem for p in args.csv[len(labels):]]
    svg = phase_portrait_svg(trajs, labels[: len(trajs)], safe_set, args.title or "")
    out = Path(args.out or "phase_portrait.svg")
    if out.suffix.lower() != ".svg":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "phase_portrait.svg"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    logger.info("wrote %s", out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file")
    common.add_argument("--out", help="output directory (plot: .svg file or directory)")
    common.add_argument("--seed", type=int, help="override disturbance.seed (unsigned 64-bit)")
    common.add_argument("--runs", type=int, help="override sim.n_runs")
    common.add_argument("--workers", type=int, default=1, help="parallel rollout processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="riskcbf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate and write trajectories + summary").set_defaults(func=cmd_run)
    sub.add_parser("compare", parents=[common], help="proposed vs standard on shared seeds").set_defaults(
        func=cmd_compare
    )
    sub.add_parser("cvar", parents=[common], help="worst-case CVaR of a quadratic loss").set_defaults(func=cmd_cvar)
    p = sub.add_parser("plot", parents=[common], help="SVG phase portrait of trajectory CSVs")
    p.add_argument("csv", nargs="*", help="trajectory CSV files")
    p.add_argument("--label", action="append", help="legend label (repeat, in CSV order)")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
