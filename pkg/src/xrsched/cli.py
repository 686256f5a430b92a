"""Command-line entry point: ``xrsched simulate | oracle | validate-config | defaults``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .errors import XrSchedError


def _cmd_simulate(args) -> int:
    from .config import parse_config
    from .experiment import resolve_output_dir, run_experiment

    spec = parse_config(args.config, fast=args.fast)
    changes = {"output_dir": resolve_output_dir(spec, args.out)}
    if args.workers is not None:
        if args.workers < 1:
            raise XrSchedError("--workers must be >= 1")
        changes["workers"] = args.workers
    spec = dataclasses.replace(spec, **changes)
    summary = run_experiment(spec)
    print(f"wrote {len(summary['runs'])} runs to {spec.output_dir} (config hash {summary['config_hash']})")
    for cap in summary["capacity"]:
        flag = f" ({cap['censored']}-censored)" if cap["censored"] else ""
        print(f"  {cap['scheduler']:>8}  psdb {cap['psdb_ms']:g} ms  capacity {cap['capacity']:.2f}{flag}")
    return 0


def _cmd_oracle(args) -> int:
    from .exact import check_constraints, heuristic_on_instance, load_instance, solve_exact

    inst = load_instance(args.instance)
    sol = solve_exact(inst)
    _, h_obj = heuristic_on_instance(inst)
    checks = check_constraints(inst, sol)
    grid = [[sol.assignment[(s, p)] for p in range(inst.num_prbs)] for s in range(inst.num_slots)]
    report = {
        "exact_objective": sol.objective,
        "heuristic_objective": h_obj,
        "gap": sol.objective - h_obj,
        "gamma": sol.gamma,
        "y": sol.y,
        "assignment": grid,
        "constraints": checks,
    }
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if all(checks.values()) else 4


def _cmd_validate(args) -> int:
    from .config import parse_config

    spec = parse_config(args.config)
    print(f"{args.config}: ok (config hash {spec.config_hash()}, {len(spec.tuples())} runs)")
    return 0


def _cmd_defaults(args) -> int:
    from .config import reference_text

    text = reference_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xrsched", description="XR downlink scheduling simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a load sweep and write figure data")
    p.add_argument("--config", required=True)
    p.add_argument("--fast", action="store_true", help="4 cells, 3 drops, 5 s per drop")
    p.add_argument("--out", help="output directory (overrides the config and XRSCHED_OUTPUT_DIR)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("oracle", help="solve a tiny instance exactly and compare with the heuristic")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("validate-config", help="parse and validate a config file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("defaults", help="print every config key with its default")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_defaults)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except XrSchedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
