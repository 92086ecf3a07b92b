"""Command-line entry point.

Exit codes: 0 success, 1 trace violations found, 2 configuration error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .core import validate_trace
from .environments import MemoryBudgetError
from .learners import GammaConditionError
from .oracle import OracleResult, best_action_hindsight, grid_argmin_simplex, mc_unbiasedness
from .solver import ConvergenceError, RegularizerParams
from .tracefile import load_trace, save_trace

EXIT_OK, EXIT_VIOLATIONS, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("evolving_feedback")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    result = harness.run_experiment(cfg)
    paths = harness.write_outputs(result, args.out, args.max_round_seeds)
    if args.save_trace:
        save_trace(result.batch.trace(0), Path(args.out) / "trace.json")
    row = result.summary_row()
    print(harness.csv_text(harness.SUMMARY_COLUMNS, [row]), end="")
    for name, p in paths.items():
        log.info("wrote %s: %s", name, p)
    if result.batch.error:
        log.error(result.batch.error)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    grid = dict(harness.parse_vary(v) for v in args.vary)
    rows = harness.sweep(cfg, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = harness.csv_text(harness.SWEEP_COLUMNS, rows)
    (out / "sweep.csv").write_text(text)
    print(text, end="")
    return EXIT_NUMERIC if any(r.get("error") for r in rows) else EXIT_OK


def cmd_validate(args) -> int:
    trace = load_trace(args.trace)
    d_max = trace.commitment.d_max if args.d_max is None else args.d_max
    violations = validate_trace(trace, d_max)
    for v in violations:
        print(f"t={v.t} tau={v.tau} {v.rule} {v.detail}")
    print(f"{len(violations)} violation(s)")
    return EXIT_VIOLATIONS if violations else EXIT_OK


def cmd_oracle(args) -> int:
    if args.oracle == "argmin":
        params = RegularizerParams(args.eta, args.barrier)
        p = grid_argmin_simplex(np.array(_floats(args.L)), params, args.resolution)
        res = OracleResult(p, "grid+pairwise-descent", args.resolution)
    elif args.oracle == "best-action":
        with open(args.losses) as fh:
            losses = json.load(fh)
        a, total = best_action_hindsight(losses)
        res = OracleResult({"action": a + 1, "total_loss": total}, "column-sum scan", len(losses))
    elif args.oracle == "unbiased":
        mean, se, z = mc_unbiasedness(_floats(args.feedback), _floats(args.p), args.samples, args.seed)
        res = OracleResult(
            {"mean": mean.tolist(), "stderr": se.tolist(), "z": z.tolist()}, "monte-carlo", args.samples
        )
    else:
        cfg = harness.load_config(args.config)
        value = harness.exact_regret(cfg)
        res = OracleResult(value, "path enumeration", cfg.environment.K ** cfg.T)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evolve", description="Regret simulator for evolving feedback.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-round-seeds", type=int, default=None, help="limit rounds.csv to the first N seeds")
    p.add_argument("--save-trace", action="store_true", help="also write trace.json for the first seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter grid")
    p.add_argument("--config", required=True)
    p.add_argument("--vary", action="append", required=True, metavar="PARAM=V1,V2,...")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a trace file's invariants")
    p.add_argument("--trace", required=True)
    p.add_argument("--d-max", type=int, default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="brute-force reference computations")
    osub = p.add_subparsers(dest="oracle", required=True)
    o = osub.add_parser("argmin")
    o.add_argument("--L", required=True, help="comma-separated cumulative losses")
    o.add_argument("--eta", type=float, required=True)
    o.add_argument("--barrier", type=float, default=0.0)
    o.add_argument("--resolution", type=int, default=100)
    o = osub.add_parser("best-action")
    o.add_argument("--losses", required=True, help="JSON file with a T x K loss table")
    o = osub.add_parser("unbiased")
    o.add_argument("--feedback", required=True)
    o.add_argument("--p", required=True)
    o.add_argument("--samples", type=int, default=100_000)
    o.add_argument("--seed", type=int, default=0)
    o = osub.add_parser("exact-regret")
    o.add_argument("--config", required=True)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConvergenceError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GammaConditionError, MemoryBudgetError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
