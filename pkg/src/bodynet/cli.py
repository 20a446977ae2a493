"""Command-line entry points.

Subcommands: ``validate``, ``plan``, ``run``, ``compare``, ``oracle``.
Exit codes: 0 success, 1 usage, 2 validation, 3 out-of-resource,
4 instance too large, 5 I/O. ``BODYNET_LOG`` (error/warn/info/debug)
controls diagnostics on stderr; machine-readable output goes to stdout or
files only.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import simulator
from .errors import (
    BodynetError,
    InstanceTooLargeError,
    OutOfResourceError,
    ParseError,
    ScenarioError,
    ValidationError,
)
from .fleet import available_at
from .orchestrator import brute_force_optimal, plan_report, plan_workload
from .simulator import compare_policies, load_scenario, run, write_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_OOR = 3
EXIT_TOO_LARGE = 4
EXIT_IO = 5

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("BODYNET_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(name)s: %(message)s")


def _build_parser() -> _Parser:
    parser = _Parser(prog="bodynet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a scenario file")
    p_validate.add_argument("scenario")

    p_plan = sub.add_parser("plan", help="plan a scenario at t=0 and print the report")
    p_plan.add_argument("scenario")

    p_run = sub.add_parser("run", help="simulate a scenario and write trace files")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--policy", choices=simulator.POLICIES,
                       default=simulator.POLICY_ORCHESTRATOR)

    p_compare = sub.add_parser("compare", help="run all three policies side by side")
    p_compare.add_argument("scenario")
    p_compare.add_argument("--out", required=True)

    p_oracle = sub.add_parser("oracle", help="brute-force optimum on a tiny scenario")
    p_oracle.add_argument("scenario")
    return parser


def _load(path: str) -> simulator.Scenario:
    return load_scenario(path)


def _cmd_validate(args) -> int:
    _load(args.scenario)
    return EXIT_OK


def _cmd_plan(args) -> int:
    scenario = _load(args.scenario)
    snapshot = available_at(scenario.fleet, [], 0.0)
    result = plan_workload(
        scenario.apps, scenario.models, scenario.fleet, snapshot,
        scenario.search, scenario.thermal, scenario.objective,
    )
    report = plan_report(result, scenario.fleet, snapshot, scenario.thermal)
    print(json.dumps(report, indent=2))
    return EXIT_OOR if result.suspended else EXIT_OK


def _cmd_run(args) -> int:
    scenario = _load(args.scenario)
    if args.seed is not None:
        import dataclasses

        scenario = dataclasses.replace(
            scenario,
            seed=args.seed,
            search=dataclasses.replace(scenario.search, seed=args.seed),
        )
    trace = run(scenario, policy=args.policy)
    write_trace(trace, args.out)
    return EXIT_OK


def _cmd_compare(args) -> int:
    scenario = _load(args.scenario)
    traces, comparison = compare_policies(scenario)
    out = Path(args.out)
    for name, trace in traces.items():
        write_trace(trace, out / name)
    (out / "comparison.json").write_text(
        json.dumps(comparison.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    return EXIT_OK


def _cmd_oracle(args) -> int:
    scenario = _load(args.scenario)
    snapshot = available_at(scenario.fleet, [], 0.0)
    from .fleet import bind_virtual

    bound = [
        (app, bind_virtual(app, scenario.fleet, snapshot, scenario.models[app.model]))
        for app in scenario.apps
    ]
    result = brute_force_optimal(
        bound, scenario.fleet, snapshot, scenario.models,
        scenario.objective, scenario.thermal,
        k_max=scenario.search.max_segments_per_model,
    )
    report = {
        "shared_period_s": result.workload.shared_period_s,
        "total_energy_j": result.workload.total_energy_j,
        "apps": [entry.plan.to_dict() for entry in result.planned],
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "plan": _cmd_plan,
    "run": _cmd_run,
    "compare": _cmd_compare,
    "oracle": _cmd_oracle,
}


def cli_main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except InstanceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except OutOfResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OOR
    except (ParseError, ValidationError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BodynetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
