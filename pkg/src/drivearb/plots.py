"""Figures for simulation runs: behavior timeline and driven path.

Rendering uses matplotlib's object API only, so no global pyplot state
is touched and no interactive backend is needed. SVG output is made
byte-reproducible by pinning the id hash salt and omitting the
creation date, so equal traces render to equal files.
"""
from __future__ import annotations

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure
from matplotlib.transforms import blended_transform_factory

from .simulator import RunTrace
from .world import LaneGraphMap

_SVG_RC = {"svg.hashsalt": "drivearb", "svg.fonttype": "none"}
_BAR_HEIGHT = 0.6
_FALLBACK_DT = 0.1  # s, bar length of a single-tick trace


class EmptyTraceError(ValueError):
    """Raised when a figure is requested for a trace without ticks."""


def _leaf_of(tick) -> str:
    path = tick.trace.active_path
    return path[-1] if path else "(none)"


def _leaf_intervals(trace: RunTrace):
    """Group consecutive ticks by active leaf.

    Returns the leaves in order of first activation, the activity
    intervals per leaf and the end time of the last tick.
    """
    ticks = trace.ticks
    dt = ticks[1].time - ticks[0].time if len(ticks) > 1 else _FALLBACK_DT
    order: list[str] = []
    intervals: dict[str, list[tuple[float, float]]] = {}
    current = _leaf_of(ticks[0])
    start = ticks[0].time
    for tick in ticks[1:]:
        leaf = _leaf_of(tick)
        if leaf == current:
            continue
        intervals.setdefault(current, []).append((start, tick.time))
        if current not in order:
            order.append(current)
        current, start = leaf, tick.time
    end = ticks[-1].time + dt
    intervals.setdefault(current, []).append((start, end))
    if current not in order:
        order.append(current)
    return order, intervals, end


def _save(fig: Figure, path) -> None:
    with mpl.rc_context(_SVG_RC):
        if str(path).endswith(".svg"):
            fig.savefig(path, metadata={"Date": None})
        else:
            fig.savefig(path)


def plot_timeline(trace: RunTrace, path) -> None:
    """Render the active-behavior timeline: one row per leaf,
    filled bars over its activity intervals, event markers on top."""
    if not trace.ticks:
        raise EmptyTraceError("cannot plot a timeline for an empty trace")
    order, intervals, end = _leaf_intervals(trace)
    fig = Figure(figsize=(9.0, 0.55 * len(order) + 1.8), dpi=100)
    ax = fig.subplots()
    colors = mpl.colormaps["tab10"]
    for row, leaf in enumerate(order):
        spans = [(s, e - s) for s, e in intervals[leaf]]
        ax.broken_barh(
            spans, (row - _BAR_HEIGHT / 2, _BAR_HEIGHT),
            facecolors=colors(row % 10), edgecolors="none",
        )
    marks = blended_transform_factory(ax.transData, ax.transAxes)
    for event in trace.events:
        ax.axvline(event.time, color="0.35", linestyle=":", linewidth=0.8)
        ax.text(
            event.time, 0.99, event.kind, transform=marks,
            rotation=90, ha="right", va="top", fontsize=6, color="0.35",
        )
    ax.set_yticks(range(len(order)), labels=order)
    ax.invert_yaxis()
    ax.set_xlim(trace.ticks[0].time, end)
    ax.set_xlabel("time [s]")
    ax.set_title(f"active behavior ({trace.outcome})", fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def _lane_edges(lane):
    """Left and right boundary polylines offset from the centerline."""
    pts = lane.centerline
    deltas = np.diff(pts, axis=0)
    dirs = deltas / np.linalg.norm(deltas, axis=1, keepdims=True)
    # vertex directions: average of adjacent segment directions
    vdirs = np.vstack([dirs[:1], 0.5 * (dirs[:-1] + dirs[1:]), dirs[-1:]])
    norms = np.linalg.norm(vdirs, axis=1, keepdims=True)
    vdirs = vdirs / np.where(norms > 1e-12, norms, 1.0)
    normal = np.column_stack([-vdirs[:, 1], vdirs[:, 0]])
    half = 0.5 * lane.width
    return pts + half * normal, pts - half * normal


def plot_path(trace: RunTrace, world_map: LaneGraphMap, path) -> None:
    """Render the lane geometry with the driven x-y path on top."""
    if not trace.ticks:
        raise EmptyTraceError("cannot plot a path for an empty trace")
    fig = Figure(figsize=(9.0, 4.8), dpi=100)
    ax = fig.subplots()
    for lane_id in sorted(world_map.lanes):
        lane = world_map.lanes[lane_id]
        left, right = _lane_edges(lane)
        ax.plot(left[:, 0], left[:, 1], color="0.75", linewidth=0.8)
        ax.plot(right[:, 0], right[:, 1], color="0.75", linewidth=0.8)
        ax.plot(
            lane.centerline[:, 0], lane.centerline[:, 1],
            color="0.85", linewidth=0.7, linestyle="--",
        )
        mid = lane.point_at(0.5 * lane.length)
        ax.annotate(lane_id, mid, fontsize=6, color="0.55", ha="center")
    for spot_id in sorted(world_map.parking_spots):
        spot = world_map.parking_spots[spot_id]
        ax.plot(spot.pose.x, spot.pose.y, marker="s", color="0.5", markersize=6)
        ax.annotate(spot_id, (spot.pose.x, spot.pose.y), fontsize=6, color="0.5")
    xs = [tick.ego.pose.x for tick in trace.ticks]
    ys = [tick.ego.pose.y for tick in trace.ticks]
    ax.plot(xs, ys, color="tab:blue", linewidth=1.6)
    ax.plot(xs[0], ys[0], marker="o", color="tab:green", markersize=6)
    ax.plot(xs[-1], ys[-1], marker="X", color="tab:red", markersize=7)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"driven path ({trace.outcome})", fontsize=10)
    fig.tight_layout()
    _save(fig, path)
