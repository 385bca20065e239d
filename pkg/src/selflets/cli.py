"""Command-line entry point: ``selflet-sim --scenario teach_propagation.json``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .simulator import ScenarioError, export_metrics, load_scenario, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="selflet-sim",
                                description="Run a deterministic SelfLet network simulation.")
    p.add_argument("--scenario", required=True,
                   help="scenario JSON file, or the name of a built-in scenario")
    p.add_argument("--duration", type=int, help="override the scenario duration (ticks)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--policy", choices=("on", "off"),
                   help="enable or disable every autonomic rule in the scenario")
    p.add_argument("--metrics-out", type=Path, help="write the metrics report to this file")
    p.add_argument("--format", choices=("csv", "json"),
                   help="metrics format (default: from --metrics-out suffix, else json)")
    p.add_argument("--log-events", action="store_true",
                   help="dump the event trace to stderr as JSON lines")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.duration is not None and args.duration < 0:
        print("selflet-sim: --duration must be non-negative", file=sys.stderr)
        return 2
    try:
        scenario = load_scenario(args.scenario).with_overrides(
            duration=args.duration, seed=args.seed,
            policy=None if args.policy is None else args.policy == "on")
    except (ScenarioError, OSError) as exc:
        print(f"selflet-sim: {exc}", file=sys.stderr)
        return 1

    log_events = args.log_events or os.environ.get("SELFLET_SIM_LOG", "").lower() == "trace"
    trace: list | None = [] if log_events else None
    report = run(scenario, trace)

    if trace is not None:
        for rec in trace:
            sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")

    fmt = args.format
    if fmt is None:
        fmt = "csv" if args.metrics_out is not None and args.metrics_out.suffix == ".csv" else "json"
    if args.metrics_out is not None:
        try:
            export_metrics(report, fmt, args.metrics_out)
        except OSError as exc:
            print(f"selflet-sim: cannot write metrics: {exc}", file=sys.stderr)
            return 1

    goals = " ".join(f"goals_{n}={v['goals_executed']}" for n, v in sorted(report.nodes.items()))
    print(f"{scenario.name}: ticks={scenario.duration} policy={'on' if scenario.policy_enabled else 'off'} "
          f"messages={report.total_messages} convergence_tick={report.convergence_tick} {goals}"
          + (" STALLED" if report.stalled else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
