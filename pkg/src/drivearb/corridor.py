"""Maneuver corridors and the command types behaviors emit.

A corridor is a drivable band: left and right bounds around a reference
line, annotated with stepwise velocity objectives and the lanes it runs
through. Corridor commands leave the exact trajectory to a downstream
follower; trajectory commands pin it down, for maneuvers like parking
or emergency stops where geometry matters more than flexibility.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import Pose
from .world import LaneChain, LaneGraphMap, Route, TrackedObject, Unroutable, match_ego_lane

SAMPLE_STEP = 1.0  # m, corridor discretization
CHAIN_BUDGET = 1500.0  # m, cap on how far ahead corridors are built

ACC_LEADING = "accLeading"
TARGET_LEADING = "targetLaneLeading"
TARGET_FOLLOWING = "targetLaneFollowing"
YIELD_TO = "yieldTo"
VIRTUAL_STOP = "virtualStop"


class NotApplicable(RuntimeError):
    """The requested corridor cannot be built from here."""


@dataclass
class ObjectFlag:
    object_id: str
    role: str


@dataclass
class ManeuverVariant:
    flags: list[ObjectFlag] = field(default_factory=list)
    note: str = ""


class Corridor:
    def __init__(
        self,
        world_map: LaneGraphMap,
        reference: np.ndarray,
        left_bound: np.ndarray,
        right_bound: np.ndarray,
        lane_segments: list[tuple[float, float, str]],
        ends_with_stop: bool,
        ego_chain: LaneChain | None = None,
        target_chain: LaneChain | None = None,
        ego_offset: float = 0.0,
        target_offset: float = 0.0,
    ):
        self.world_map = world_map
        self.reference = reference
        self.left_bound = left_bound
        self.right_bound = right_bound
        self.lane_segments = lane_segments
        self.ends_with_stop = ends_with_stop
        self.ego_chain = ego_chain
        self.target_chain = target_chain
        self.ego_offset = ego_offset
        self.target_offset = target_offset
        self.cum = geometry.cumulative_lengths(reference)
        self.velocity_objectives: list[tuple[float, float]] = []

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def project(self, point) -> tuple[float, float]:
        return geometry.project(self.reference, self.cum, point)

    def point_at(self, s: float) -> np.ndarray:
        return geometry.point_at(self.reference, self.cum, s)

    def heading_at(self, s: float) -> float:
        return geometry.heading_at(self.reference, self.cum, s)

    def lane_at(self, s: float) -> str:
        last = self.lane_segments[-1][2]
        for s0, s1, lane_id in self.lane_segments:
            if s <= s1:
                return lane_id
        return last

    def half_width_at(self, s: float) -> float:
        return 0.5 * self.world_map.lane(self.lane_at(s)).width

    def contains(self, point, extra: float = 0.0) -> bool:
        s, lat = self.project(point)
        if s <= 1e-6 or s >= self.length - 1e-6:
            return False
        return abs(lat) <= self.half_width_at(s) + extra


def follow_chain(world_map: LaneGraphMap, route: Route, start_lane: str) -> tuple[list[str], str]:
    """Walk the lanes a keep-this-lane maneuver would cover.

    While the thread requires a lane change to finish the route, it is
    extended only as long as that change stays possible, so the chain
    ends at the last lane from which the route can still be joined.
    Returns the lane ids and the reason the walk stopped: "goal",
    "lane-change" or "budget".
    """
    hops = route.hops_by_lane(world_map)
    if start_lane not in hops:
        raise Unroutable(f"lane {start_lane!r} cannot reach the route goal")

    def change_possible(lane_id: str) -> bool:
        lane = world_map.lane(lane_id)
        for direction in ("left", "right"):
            nbr, reachable = lane.adjacent(direction)
            if nbr is not None and reachable and hops.get(nbr, math.inf) == hops[lane_id] - 1:
                return True
        return False

    chain = [start_lane]
    total = world_map.lane(start_lane).length
    while total < CHAIN_BUDGET:
        cur = chain[-1]
        if hops[cur] == 0:
            if cur == route.goal_lane:
                return chain, "goal"
            nxt = [s for s in world_map.lane(cur).successors if hops.get(s) == 0]
            if not nxt:
                return chain, "goal"
            on_route = [s for s in nxt if s in route.lane_ids]
            pick = on_route[0] if on_route else nxt[0]
        else:
            nxt = [s for s in world_map.lane(cur).successors if hops.get(s) == hops[cur]]
            nxt = [s for s in nxt if change_possible(s)]
            if not nxt:
                return chain, "lane-change"
            pick = nxt[0]
        if pick in chain:
            break  # loop guard
        chain.append(pick)
        total += world_map.lane(pick).length
    return chain, "budget"


def plain_chain(world_map: LaneGraphMap, start_lane: str) -> list[str]:
    """Successor walk with no routing, for threads off the route."""
    chain = [start_lane]
    total = world_map.lane(start_lane).length
    while total < CHAIN_BUDGET:
        succ = world_map.lane(chain[-1]).successors
        if not succ or succ[0] in chain:
            break
        chain.append(succ[0])
        total += world_map.lane(succ[0]).length
    return chain


def build_chain_corridor(
    world_map: LaneGraphMap,
    chain: LaneChain,
    s_start: float,
    s_end: float,
    ends_with_stop: bool,
) -> Corridor:
    s_start = max(0.0, min(s_start, chain.length))
    s_end = max(s_start + 1e-6, min(s_end, chain.length))
    n = max(int(math.ceil((s_end - s_start) / SAMPLE_STEP)), 1)
    stations = np.linspace(s_start, s_end, n + 1)
    reference = np.vstack([chain.point_at(s) for s in stations])
    widths = np.array([chain.width_at(s) for s in stations])
    left = geometry.offset_polyline(reference, 0.5 * widths)
    right = geometry.offset_polyline(reference, -0.5 * widths)
    segments = []
    for s0, s1, lane_id in chain.segments:
        lo = max(s0, s_start) - s_start
        hi = min(s1, s_end) - s_start
        if hi > lo + 1e-9:
            segments.append((lo, hi, lane_id))
    return Corridor(
        world_map,
        reference,
        left,
        right,
        segments,
        ends_with_stop,
        ego_chain=chain,
        ego_offset=s_start,
    )


def build_follow_corridor(
    world_map: LaneGraphMap, route: Route, ego_lane_id: str, ego_pose: Pose
) -> Corridor:
    """Corridor for staying in the current lane thread along the route."""
    ids, reason = follow_chain(world_map, route, ego_lane_id)
    chain = LaneChain(world_map, ids)
    s_start, _ = chain.project(ego_pose.position)
    s_end = chain.length
    if reason == "goal" and route.goal_lane in ids:
        s_goal, _ = chain.project(route.goal_pose.position)
        s_end = min(s_end, max(s_goal, s_start + 1e-3))
    return build_chain_corridor(
        world_map, chain, s_start, s_end, ends_with_stop=reason != "budget"
    )


def build_change_corridor(
    world_map: LaneGraphMap,
    route: Route,
    ego_lane_id: str,
    direction: str,
    ego_pose: Pose,
    d_max: float,
) -> Corridor:
    """Corridor for a lane change into the reachable neighbor lane.

    The band spans both lanes until the ego lane is cut at ``d_max``; the
    reference eases over to the target centerline in the second half of
    that window and follows the target thread along the route from there.
    """
    lane = world_map.lane(ego_lane_id)
    target_id, reachable = lane.adjacent(direction)
    if target_id is None or not reachable:
        raise NotApplicable(f"no reachable {direction} neighbor from {ego_lane_id!r}")
    try:
        target_ids, reason = follow_chain(world_map, route, target_id)
    except Unroutable as exc:
        raise NotApplicable(str(exc)) from exc
    try:
        ego_ids, _ = follow_chain(world_map, route, ego_lane_id)
    except Unroutable:
        ego_ids = plain_chain(world_map, ego_lane_id)
    ego_chain = LaneChain(world_map, ego_ids)
    target_chain = LaneChain(world_map, target_ids)
    s_e0, _ = ego_chain.project(ego_pose.position)
    s_t0, _ = target_chain.project(ego_pose.position)

    s_t_end = target_chain.length
    if reason == "goal" and route.goal_lane in target_ids:
        s_goal, _ = target_chain.project(route.goal_pose.position)
        s_t_end = min(s_t_end, s_goal)
    total = s_t_end - s_t0
    if total < 5.0:
        raise NotApplicable("not enough room ahead to change lanes")

    ego_avail = min(ego_chain.length - s_e0, d_max, total)
    blend0 = min(0.5 * d_max, 0.5 * ego_avail)
    blend1 = max(ego_avail, blend0 + 1e-3)

    n = max(int(math.ceil(total / SAMPLE_STEP)), 1)
    stations = np.linspace(0.0, total, n + 1)
    reference = np.empty((len(stations), 2))
    left = np.empty_like(reference)
    right = np.empty_like(reference)
    segments_src = []
    for i, s in enumerate(stations):
        p_t = target_chain.point_at(s_t0 + s)
        h_t = target_chain.heading_at(s_t0 + s)
        n_t = np.array([-math.sin(h_t), math.cos(h_t)])
        w_t = target_chain.width_at(s_t0 + s)
        if s >= blend1:
            reference[i] = p_t
            left[i] = p_t + 0.5 * w_t * n_t
            right[i] = p_t - 0.5 * w_t * n_t
            continue
        p_e = ego_chain.point_at(s_e0 + s)
        h_e = ego_chain.heading_at(s_e0 + s)
        n_e = np.array([-math.sin(h_e), math.cos(h_e)])
        w_e = ego_chain.width_at(s_e0 + s)
        if s <= blend0:
            reference[i] = p_e
        else:
            u = geometry.blend_profile((s - blend0) / (blend1 - blend0))
            reference[i] = p_e + u * (p_t - p_e)
        if direction == "right":
            left[i] = p_e + 0.5 * w_e * n_e
            right[i] = p_t - 0.5 * w_t * n_t
        else:
            left[i] = p_t + 0.5 * w_t * n_t
            right[i] = p_e - 0.5 * w_e * n_e

    for s0, s1, lane_id in target_chain.segments:
        lo = max(s0, s_t0) - s_t0
        hi = min(s1, s_t_end) - s_t0
        if hi > lo + 1e-9:
            segments_src.append((lo, hi, lane_id))
    corridor = Corridor(
        world_map,
        reference,
        left,
        right,
        segments_src,
        ends_with_stop=reason != "budget",
        ego_chain=ego_chain,
        target_chain=target_chain,
        ego_offset=s_e0,
        target_offset=s_t0,
    )
    return corridor


def assign_velocity_objectives(
    corridor: Corridor, lat_accel_max: float = 2.0, terminal_speed: float | None = None
) -> list[tuple[float, float]]:
    """Attach stepwise speed targets along the corridor.

    Each sample is capped by the lane speed limit and by the lateral
    acceleration budget sqrt(a_lat_max / curvature). A final objective of
    ``terminal_speed`` (default 0 for corridors that end in a forced stop)
    is appended at the corridor end.
    """
    kappa = geometry.curvatures(corridor.reference, corridor.cum)
    objectives: list[tuple[float, float]] = []
    last = None
    for i, s in enumerate(corridor.cum):
        limit = corridor.world_map.lane(corridor.lane_at(s)).speed_limit
        cap = limit
        if kappa[i] > 1e-6:
            cap = min(cap, math.sqrt(lat_accel_max / kappa[i]))
        if last is None or abs(cap - last) > 0.1:
            objectives.append((float(s), float(cap)))
            last = cap
    if terminal_speed is None and corridor.ends_with_stop:
        terminal_speed = 0.0
    if terminal_speed is not None:
        objectives.append((corridor.length, float(terminal_speed)))
    corridor.velocity_objectives = objectives
    return objectives


def allowed_speed(
    objectives: list[tuple[float, float]], s: float, decel: float, fallback: float = math.inf
) -> float:
    """Highest speed at arclength s that still meets every objective ahead
    under the given deceleration budget."""
    target = fallback
    envelope = math.inf
    for s_j, v_j in objectives:
        if s_j <= s:
            target = v_j
        else:
            envelope = min(envelope, math.sqrt(v_j * v_j + 2.0 * decel * (s_j - s)))
    return min(target, envelope)


def flag_objects(
    corridor: Corridor,
    objects: list[TrackedObject],
    ego_length: float = 4.5,
    prediction_window: float = 8.0,
) -> ManeuverVariant:
    """Classify objects by their role for this maneuver.

    Vehicles ahead in the ego thread become ACC objects; vehicles in the
    target thread split into leading and following relative to the ego
    position; objects whose prediction sweeps into the corridor from
    elsewhere must be yielded to; virtual stop markers pass through as
    stop flags.
    """
    variant = ManeuverVariant()
    for obj in objects:
        if obj.is_virtual_stop:
            s, lat = corridor.project(obj.pose.position)
            if -1.0 < s < corridor.length and abs(lat) <= corridor.half_width_at(s) + 0.5 * obj.width:
                variant.flags.append(ObjectFlag(obj.object_id, VIRTUAL_STOP))
            continue
        placed = False
        if corridor.target_chain is not None:
            s_t, lat_t = corridor.target_chain.project_extended(obj.pose.position)
            if abs(lat_t) < 0.5 * corridor.target_chain.width_at(s_t):
                rel = s_t - corridor.target_offset
                role = TARGET_LEADING if rel > 0.0 else TARGET_FOLLOWING
                variant.flags.append(ObjectFlag(obj.object_id, role))
                placed = True
        if not placed and corridor.ego_chain is not None:
            s_e, lat_e = corridor.ego_chain.project_extended(obj.pose.position)
            if abs(lat_e) < 0.5 * corridor.ego_chain.width_at(s_e):
                if s_e - corridor.ego_offset > 0.0:
                    variant.flags.append(ObjectFlag(obj.object_id, ACC_LEADING))
                placed = True
        if not placed:
            for t, pose in obj.prediction or [(0.0, obj.pose)]:
                if t > prediction_window:
                    break
                if corridor.contains(pose.position, extra=0.5 * obj.width):
                    variant.flags.append(ObjectFlag(obj.object_id, YIELD_TO))
                    break
    return variant


@dataclass
class CorridorCommand:
    corridor: Corridor
    variant: ManeuverVariant
    objects: list[TrackedObject] = field(default_factory=list)
    turn_signal: str | None = None

    kind = "corridor"


@dataclass
class TrajectoryPoint:
    t: float
    x: float
    y: float
    heading: float
    speed: float  # signed; negative means reversing


@dataclass
class TrajectoryCommand:
    points: list[TrajectoryPoint]
    note: str = ""

    kind = "trajectory"

    def pose_at(self, t: float) -> tuple[Pose, float]:
        pts = self.points
        if t <= pts[0].t:
            p = pts[0]
            return Pose(p.x, p.y, p.heading), p.speed
        for a, b in zip(pts, pts[1:]):
            if t <= b.t:
                u = 0.0 if b.t <= a.t else (t - a.t) / (b.t - a.t)
                heading = a.heading + u * geometry.normalize_angle(b.heading - a.heading)
                return (
                    Pose(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), heading),
                    a.speed + u * (b.speed - a.speed),
                )
        p = pts[-1]
        return Pose(p.x, p.y, p.heading), 0.0
