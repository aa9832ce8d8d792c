"""Lane-graph world model.

The map is a flat list of lanes. Each lane has a centerline polyline, a
width, a speed limit, successor lanes and optional lateral neighbors. A
neighbor carries a reachability flag: only reachable neighbors may be
entered with a lane change (think dashed versus solid markings). Routes
are ordered lane sequences ending in a goal pose and, optionally, a
parking spot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import Pose

LEFT = "left"
RIGHT = "right"

# extra lateral slack when matching a pose to a lane, in meters
MATCH_MARGIN = 0.5


class Unroutable(RuntimeError):
    """No lane-change/successor path connects a lane to the route goal."""


@dataclass
class Lane:
    lane_id: str
    centerline: np.ndarray
    width: float
    speed_limit: float
    successors: list[str] = field(default_factory=list)
    adjacent_left: str | None = None
    adjacent_right: str | None = None
    left_reachable: bool = False
    right_reachable: bool = False
    intersection_arm: bool = False
    highway: bool = False

    def __post_init__(self):
        self.centerline = geometry.as_polyline(self.centerline)
        self._cum = geometry.cumulative_lengths(self.centerline)

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def project(self, point) -> tuple[float, float]:
        return geometry.project(self.centerline, self._cum, point)

    def point_at(self, s: float) -> np.ndarray:
        return geometry.point_at(self.centerline, self._cum, s)

    def heading_at(self, s: float) -> float:
        return geometry.heading_at(self.centerline, self._cum, s)

    def adjacent(self, direction: str) -> tuple[str | None, bool]:
        if direction == LEFT:
            return self.adjacent_left, self.left_reachable
        if direction == RIGHT:
            return self.adjacent_right, self.right_reachable
        raise ValueError(f"unknown direction {direction!r}")


@dataclass
class ParkingSpot:
    spot_id: str
    pose: Pose
    entry_lane: str | None = None


@dataclass
class LaneGraphMap:
    lanes: dict[str, Lane]
    parking_spots: dict[str, ParkingSpot] = field(default_factory=dict)

    def lane(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]

    def spot(self, spot_id: str) -> ParkingSpot:
        return self.parking_spots[spot_id]


@dataclass(eq=False)
class Route:
    lane_ids: list[str]
    goal_pose: Pose
    goal_spot: str | None = None

    def __post_init__(self):
        self._hops_cache: dict[int, dict[str, int]] = {}

    @property
    def goal_lane(self) -> str:
        return self.lane_ids[-1]

    def hops_by_lane(self, world_map: LaneGraphMap) -> dict[str, int]:
        """Minimum number of lane changes from each lane to the goal lane.

        Successor edges are free, reachable lateral moves cost one. Lanes
        with no path to the goal are absent from the result.
        """
        key = id(world_map)
        cached = self._hops_cache.get(key)
        if cached is not None:
            return cached
        # Dijkstra with 0/1 weights, run backwards from the goal lane over
        # reversed edges.
        preds_free: dict[str, list[str]] = {i: [] for i in world_map.lanes}
        preds_change: dict[str, list[str]] = {i: [] for i in world_map.lanes}
        for lane in world_map.lanes.values():
            for succ in lane.successors:
                if succ in preds_free:
                    preds_free[succ].append(lane.lane_id)
            for direction in (LEFT, RIGHT):
                nbr, reachable = lane.adjacent(direction)
                if nbr is not None and reachable and nbr in preds_change:
                    preds_change[nbr].append(lane.lane_id)
        hops = {self.goal_lane: 0}
        from collections import deque

        queue: deque[str] = deque([self.goal_lane])
        while queue:
            cur = queue.popleft()
            base = hops[cur]
            for prev in preds_free[cur]:
                if prev not in hops or hops[prev] > base:
                    hops[prev] = base
                    queue.appendleft(prev)
            for prev in preds_change[cur]:
                if prev not in hops or hops[prev] > base + 1:
                    hops[prev] = base + 1
                    queue.append(prev)
        self._hops_cache[key] = hops
        return hops


@dataclass
class EgoState:
    pose: Pose
    speed: float
    length: float = 4.5
    width: float = 1.8

    def footprint(self) -> np.ndarray:
        return geometry.rect_corners(
            self.pose.x, self.pose.y, self.pose.heading, self.length, self.width
        )


@dataclass
class TrackedObject:
    object_id: str
    pose: Pose
    speed: float
    length: float = 4.5
    width: float = 1.8
    is_virtual_stop: bool = False
    prediction: list[tuple[float, Pose]] = field(default_factory=list)

    def footprint(self) -> np.ndarray:
        return geometry.rect_corners(
            self.pose.x, self.pose.y, self.pose.heading, self.length, self.width
        )

    def pose_at(self, t: float) -> Pose:
        """Predicted pose at relative time t, linearly interpolated."""
        if not self.prediction:
            return self.pose
        times = [p[0] for p in self.prediction]
        if t <= times[0]:
            return self.prediction[0][1]
        for i in range(len(times) - 1):
            if t <= times[i + 1]:
                t0, p0 = self.prediction[i]
                t1, p1 = self.prediction[i + 1]
                if t1 <= t0:
                    return p1
                u = (t - t0) / (t1 - t0)
                return Pose(
                    p0.x + u * (p1.x - p0.x),
                    p0.y + u * (p1.y - p0.y),
                    p0.heading + u * geometry.normalize_angle(p1.heading - p0.heading),
                )
        return self.prediction[-1][1]


@dataclass(eq=False)
class EnvironmentSnapshot:
    world_map: LaneGraphMap
    route: Route
    ego: EgoState
    objects: list[TrackedObject]
    time: float


def match_ego_lane(world_map: LaneGraphMap, pose: Pose, route: Route | None = None) -> str | None:
    """Match a pose to a lane.

    Lanes that geometrically contain the pose beat lanes that are merely
    within the match margin, so a vehicle straddling a boundary stays
    matched to the lane it is mostly in. Within each group, lanes on the
    route win; remaining ties go to the smallest lateral distance.
    """
    point = pose.position
    containing: list[tuple[float, str]] = []
    nearby: list[tuple[float, str]] = []
    for lane in world_map.lanes.values():
        s, lat = lane.project(point)
        if abs(lat) >= 0.5 * lane.width + MATCH_MARGIN:
            continue
        if s <= 1e-9 or s >= lane.length - 1e-9:
            # projection clamps at the ends; make sure the pose is actually
            # alongside this lane and not off its tip
            foot = lane.point_at(s)
            along = abs(np.hypot(*(point - foot))) - abs(lat)
            if along > MATCH_MARGIN:
                continue
        group = containing if abs(lat) < 0.5 * lane.width else nearby
        group.append((abs(lat), lane.lane_id))
    candidates = containing or nearby
    if not candidates:
        return None
    if route is not None:
        on_route = [c for c in candidates if c[1] in route.lane_ids]
        if on_route:
            return min(on_route)[1]
    return min(candidates)[1]


def lane_changes_needed(world_map: LaneGraphMap, route: Route, from_lane: str) -> int:
    """Number of lane changes needed to rejoin and finish the route.

    Raises Unroutable when no combination of successors and reachable
    neighbors leads from ``from_lane`` to the route's goal lane.
    """
    hops = route.hops_by_lane(world_map)
    if from_lane not in hops:
        raise Unroutable(f"no path from lane {from_lane!r} to {route.goal_lane!r}")
    return hops[from_lane]


def predict_constant_velocity(obj: TrackedObject, horizon: float, dt: float) -> list[tuple[float, Pose]]:
    """Constant-velocity, constant-heading prediction.

    Produces floor(horizon / dt) + 1 timed poses starting at t = 0.
    """
    n = int(math.floor(horizon / dt + 1e-9)) + 1
    cx, sy = math.cos(obj.pose.heading), math.sin(obj.pose.heading)
    out = []
    for k in range(n):
        t = k * dt
        out.append(
            (t, Pose(obj.pose.x + obj.speed * t * cx, obj.pose.y + obj.speed * t * sy, obj.pose.heading))
        )
    return out


def validate_map(world_map: LaneGraphMap) -> list[str]:
    """Collect structural defects. An empty list means the map is usable."""
    problems: list[str] = []
    lanes = world_map.lanes
    for lane in lanes.values():
        if lane.width <= 0.0:
            problems.append(f"lane {lane.lane_id}: width must be positive")
        if lane.speed_limit <= 0.0:
            problems.append(f"lane {lane.lane_id}: speed limit must be positive")
        for succ in lane.successors:
            if succ not in lanes:
                problems.append(f"lane {lane.lane_id}: unknown successor {succ!r}")
                continue
            gap = np.hypot(*(lanes[succ].centerline[0] - lane.centerline[-1]))
            if gap > 0.1:
                problems.append(
                    f"lane {lane.lane_id}: successor {succ!r} starts {gap:.2f} m away"
                )
        for direction, back in ((LEFT, RIGHT), (RIGHT, LEFT)):
            nbr, _ = lane.adjacent(direction)
            if nbr is None:
                continue
            if nbr not in lanes:
                problems.append(f"lane {lane.lane_id}: unknown {direction} neighbor {nbr!r}")
                continue
            nbr_back, _ = lanes[nbr].adjacent(back)
            if nbr_back != lane.lane_id:
                problems.append(
                    f"lane {lane.lane_id}: {direction} neighbor {nbr!r} does not point back"
                )
    for spot in world_map.parking_spots.values():
        if spot.entry_lane is not None and spot.entry_lane not in lanes:
            problems.append(f"spot {spot.spot_id}: unknown entry lane {spot.entry_lane!r}")
    return problems


class LaneChain:
    """A run of consecutive lanes treated as one long reference line."""

    def __init__(self, world_map: LaneGraphMap, lane_ids: list[str]):
        if not lane_ids:
            raise ValueError("a lane chain needs at least one lane")
        self.lane_ids = list(lane_ids)
        pieces = []
        self.segments: list[tuple[float, float, str]] = []
        offset = 0.0
        for lane_id in lane_ids:
            lane = world_map.lane(lane_id)
            poly = lane.centerline
            if pieces and np.hypot(*(poly[0] - pieces[-1][-1])) < 1e-6:
                poly = poly[1:]
            pieces.append(poly)
            self.segments.append((offset, offset + lane.length, lane_id))
            offset += lane.length
        self.world_map = world_map
        self.polyline = np.vstack(pieces)
        self.cum = geometry.cumulative_lengths(self.polyline)

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def lane_at(self, s: float) -> str:
        for s0, s1, lane_id in self.segments:
            if s <= s1 or lane_id == self.segments[-1][2]:
                if s >= s0 or lane_id == self.segments[0][2]:
                    return lane_id
        return self.segments[-1][2]

    def width_at(self, s: float) -> float:
        return self.world_map.lane(self.lane_at(s)).width

    def project(self, point) -> tuple[float, float]:
        return geometry.project(self.polyline, self.cum, point)

    def project_extended(self, point) -> tuple[float, float]:
        """Like project, but extrapolates straight past both chain ends,
        so arclengths may be negative or exceed the chain length."""
        s, lat = self.project(point)
        p = np.asarray(point, dtype=float)
        if s <= 1e-9:
            head = self.heading_at(0.0)
            d = p - self.polyline[0]
            tx, ty = math.cos(head), math.sin(head)
            along = d[0] * tx + d[1] * ty
            if along < 0.0:
                return float(along), float(-d[0] * ty + d[1] * tx)
        elif s >= self.length - 1e-9:
            head = self.heading_at(self.length)
            d = p - self.polyline[-1]
            tx, ty = math.cos(head), math.sin(head)
            along = d[0] * tx + d[1] * ty
            if along > 0.0:
                return self.length + float(along), float(-d[0] * ty + d[1] * tx)
        return s, lat

    def point_at(self, s: float) -> np.ndarray:
        return geometry.point_at(self.polyline, self.cum, s)

    def heading_at(self, s: float) -> float:
        return geometry.heading_at(self.polyline, self.cum, s)

    def lateral_extent_of(self, pose: Pose, length: float, width: float) -> tuple[float, float]:
        """Signed lateral center offset and half extent of a rectangle."""
        s, lat = self.project(pose.position)
        rel = geometry.normalize_angle(pose.heading - self.heading_at(s))
        half = 0.5 * (width * abs(math.cos(rel)) + length * abs(math.sin(rel)))
        return lat, half

    def fully_inside(self, pose: Pose, length: float, width: float) -> bool:
        lat, half = self.lateral_extent_of(pose, length, width)
        s, _ = self.project(pose.position)
        return abs(lat) + half <= 0.5 * self.width_at(s)

    def overlap_fraction(self, pose: Pose, length: float, width: float) -> float:
        """Fraction of the rectangle's lateral span inside the chain."""
        lat, half = self.lateral_extent_of(pose, length, width)
        s, _ = self.project(pose.position)
        half_lane = 0.5 * self.width_at(s)
        lo = max(lat - half, -half_lane)
        hi = min(lat + half, half_lane)
        if half <= 1e-9:
            return 1.0 if abs(lat) < half_lane else 0.0
        return max(0.0, hi - lo) / (2.0 * half)
