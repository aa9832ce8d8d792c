"""Command line front end.

Three subcommands: `run` executes a scenario closed loop and can write
the tick table, per-tick snapshots and figures; `validate` parses and
checks a scenario file; `graph` shows the arbitration tree a scenario
would build. Exit status: 0 on success, 1 for scenario file problems,
2 when a run ends fatally (collision or no applicable behavior).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .plots import plot_path, plot_timeline
from .scenario import ScenarioFormatError, bundled_scenarios, resolve_scenario
from .simulator import run_simulation
from .traceio import write_snapshots, write_trace_csv

FATAL_OUTCOMES = ("collision", "fatal")


def _load(name: str):
    try:
        return resolve_scenario(name), None
    except FileNotFoundError as exc:
        known = ", ".join(n.removesuffix(".scn") for n in bundled_scenarios())
        return None, f"{exc}\nbundled scenarios: {known}"
    except ScenarioFormatError as exc:
        lines = [f"{name}: {len(exc.errors)} problem(s)"]
        lines += [f"  {err}" for err in exc.errors]
        return None, "\n".join(lines)


def _cmd_run(args) -> int:
    scenario, problem = _load(args.scenario)
    if scenario is None:
        print(problem, file=sys.stderr)
        return 1
    sim = scenario.sim if args.seed is None else replace(scenario.sim, seed=args.seed)
    bundle = scenario.build_bundle()
    trace = run_simulation(
        scenario.world_map, scenario.route, scenario.ego, scenario.agents, bundle, sim
    )
    if args.trace:
        write_trace_csv(trace, args.trace, list(bundle.graph.nodes))
    if args.snapshots:
        write_snapshots(trace, args.snapshots)
    if args.plot:
        plot_timeline(trace, args.plot)
        target = Path(args.plot)
        plot_path(trace, scenario.world_map, target.with_name(target.stem + ".path" + target.suffix))
    print(
        f"{scenario.name}: outcome={trace.outcome}"
        f" ticks={len(trace.ticks)} events={len(trace.events)}"
    )
    for event in trace.events:
        detail = f" {event.detail}" if event.detail else ""
        print(f"  {event.time:6.1f}s {event.kind}{detail}")
    return 2 if trace.outcome in FATAL_OUTCOMES else 0


def _cmd_validate(args) -> int:
    scenario, problem = _load(args.scenario)
    if scenario is None:
        print(problem, file=sys.stderr)
        return 1
    print(
        f"OK: {scenario.name}"
        f" (lanes={len(scenario.world_map.lanes)},"
        f" spots={len(scenario.world_map.parking_spots)},"
        f" agents={len(scenario.agents)},"
        f" route={len(scenario.route.lane_ids)} lanes)"
    )
    return 0


def _cmd_graph(args) -> int:
    scenario, problem = _load(args.scenario)
    if scenario is None:
        print(problem, file=sys.stderr)
        return 1
    bundle = scenario.build_bundle()
    if args.print_tree:
        print(bundle.render_tree())
    else:
        print(
            f"{bundle.root.name}: {len(bundle.graph.nodes)} nodes,"
            f" {len(bundle.blocks)} behavior blocks"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivearb",
        description="Run and inspect closed-loop driving scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario closed loop")
    run_p.add_argument("scenario", help="path, name in $DRIVEARB_SCENARIO_DIR, or bundled name")
    run_p.add_argument("--trace", metavar="OUT.csv", help="write the tick table")
    run_p.add_argument("--snapshots", metavar="OUT.ndjson", help="write per-tick selection snapshots")
    run_p.add_argument("--plot", metavar="OUT.svg", help="write the timeline figure; the driven path goes to OUT.path.svg")
    run_p.add_argument("--seed", type=int, help="override the scenario's random seed")
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate", help="parse and check a scenario file")
    val_p.add_argument("scenario")
    val_p.set_defaults(func=_cmd_validate)

    graph_p = sub.add_parser("graph", help="show the arbitration graph a scenario builds")
    graph_p.add_argument("scenario")
    graph_p.add_argument("--print", dest="print_tree", action="store_true", help="print the full tree")
    graph_p.set_defaults(func=_cmd_graph)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
