"""Serialization of simulation runs.

Two formats: a comma-separated tick table for spreadsheets and plotting
tools, and one JSON document per tick with the full per-node selection
state. Both writers format numbers explicitly so that identical runs
produce byte-identical files.
"""
from __future__ import annotations

import csv
import json

from .simulator import RunTrace


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_trace_csv(trace: RunTrace, path, node_names: list[str]) -> None:
    """Write the tick table: pose, speed, active leaf and per-node costs."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = ["time_s", "active_leaf", "x", "y", "heading", "speed"]
        header += [f"cost:{name}" for name in node_names]
        writer.writerow(header)
        for tick in trace.ticks:
            row = [
                f"{tick.time:.2f}",
                tick.trace.active_leaf,
                _fmt(tick.ego.pose.x),
                _fmt(tick.ego.pose.y),
                _fmt(tick.ego.pose.heading),
                _fmt(tick.ego.speed),
            ]
            for name in node_names:
                entry = tick.trace.per_node.get(name)
                cost = entry.cost if entry is not None else None
                row.append("" if cost is None else _fmt(cost))
            writer.writerow(row)


def write_snapshots(trace: RunTrace, path) -> None:
    """Write one JSON line per tick with the full selection snapshot."""
    events_at: dict[float, list] = {}
    for event in trace.events:
        events_at.setdefault(event.time, []).append(
            {"kind": event.kind, "detail": event.detail}
        )
    with open(path, "w") as handle:
        for tick in trace.ticks:
            nodes = {}
            for name, entry in tick.trace.per_node.items():
                nodes[name] = {
                    "invocation": entry.invocation,
                    "commitment": entry.commitment,
                    "activation": entry.activation,
                    "cost": None if entry.cost is None else round(entry.cost, 6),
                    "fault": entry.fault,
                }
            doc = {
                "time": round(tick.time, 6),
                "x": round(tick.ego.pose.x, 6),
                "y": round(tick.ego.pose.y, 6),
                "heading": round(tick.ego.pose.heading, 6),
                "speed": round(tick.ego.speed, 6),
                "note": tick.note,
                "active_path": tick.trace.active_path,
                "nodes": nodes,
                "events": events_at.get(tick.time, []),
            }
            handle.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))
            handle.write("\n")
