"""Driving behavior blocks.

Each block wires an invocation condition, a commitment condition and a
command generator around the corridor and world-model helpers. Blocks
meant for a cost arbitrator also expose a cost estimate built from the
expected average velocity over their maneuver corridor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .arbitration import Behavior
from .corridor import (
    VIRTUAL_STOP,
    YIELD_TO,
    Corridor,
    CorridorCommand,
    NotApplicable,
    ObjectFlag,
    TrajectoryCommand,
    TrajectoryPoint,
    assign_velocity_objectives,
    build_chain_corridor,
    build_change_corridor,
    build_follow_corridor,
    flag_objects,
    follow_chain,
    plain_chain,
)
from .geometry import Pose, rect_corners, rects_overlap
from .parking import arc_line_path, timed_trajectory
from .units import kmh_to_ms
from .world import (
    LEFT,
    RIGHT,
    LaneChain,
    TrackedObject,
    Unroutable,
    match_ego_lane,
)

PROFILE_DT = 0.01  # s, time step of the velocity profile estimate
PROFILE_GRID = 0.25  # m, spatial resolution of the allowed-speed curve
SWEEP_DT = 0.1  # s, collision anticipation sweep step
SWEEP_HORIZON = 3.0  # s, how far ahead collisions are anticipated
ALIGN_TOLERANCE = 2.0  # m, longitudinal offset at which a gap counts as reached
REPLAN_DEVIATION = 0.5  # m, tracking error that forces a trajectory replan
STOP_LINE_OFFSET = 1.0  # m, how far before an intersection entry to stop


@dataclass
class BehaviorParams:
    """Maneuver thresholds, shared by all driving blocks."""

    d_min_ahead: float = 10.0  # m, smallest acceptable gap to the leader
    d_min_behind: float = 5.0  # m, smallest acceptable gap to the follower
    ttc_min_ahead: float = 4.0  # s
    ttc_min_behind: float = 3.0  # s
    d_max_lane_change: float = 120.0  # m, lane change must finish within this
    v_max_parking: float = 2.0  # m/s, speed under which parking may start
    r_max_parking: float = 20.0  # m, how close to the spot parking may start
    r_min_freespace: float = 5.0  # m, dynamic objects closer than this block parking
    r_min_parking: float = 0.2  # m, position tolerance of a finished park
    r_turn_parking: float = 3.0  # m, turning radius of parking paths
    v_parking: float = 1.0  # m/s, commanded speed along parking paths
    ttc_emergency: float = 1.0  # s
    a_emergency: float = 8.0  # m/s^2
    t_indicate: float = 2.0  # s, how long to indicate before merging
    a_lat_max: float = 2.0  # m/s^2, lateral acceleration budget in curves
    d_intersection_lookahead: float = 30.0  # m
    t_prediction: float = 8.0  # s, object prediction window for yielding

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0.0:
                raise ValueError(f"behavior parameter {f.name} must be positive")


@dataclass
class CostParams:
    """Parameters of the maneuver cost estimate (all speeds in m/s)."""

    j_lane_change_needed: float = kmh_to_ms(10.0)
    j_lane_change_maneuver: float = kmh_to_ms(5.0)
    hysteresis_margin: float = kmh_to_ms(1.0)
    a_comfort: float = 2.0  # m/s^2
    horizon: float = 20.0  # s

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0.0:
                raise ValueError(f"cost parameter {f.name} must be non-negative")
        if self.horizon <= 0.0 or self.a_comfort <= 0.0:
            raise ValueError("horizon and a_comfort must be positive")


def highway_variant(params: BehaviorParams) -> BehaviorParams:
    """Stricter gap thresholds for high-speed lanes."""
    return replace(
        params,
        d_min_ahead=2.0 * params.d_min_ahead,
        d_min_behind=2.0 * params.d_min_behind,
        ttc_min_ahead=1.5 * params.ttc_min_ahead,
        ttc_min_behind=1.5 * params.ttc_min_behind,
        d_max_lane_change=2.0 * params.d_max_lane_change,
    )


# -- gap assessment ----------------------------------------------------


def time_to_collision(gap: float, closing_speed: float) -> float:
    """Seconds until a gap closes; infinite when it is opening."""
    if gap < 0.0:
        raise ValueError("gap must be non-negative")
    if closing_speed <= 0.0:
        return math.inf
    return gap / closing_speed


@dataclass(frozen=True)
class GapAssessment:
    d_ahead: float  # m, bumper gap to the nearest leader (+inf when none)
    d_behind: float  # m, bumper gap to the nearest follower (+inf when none)
    ttc_ahead: float  # s
    ttc_behind: float  # s
    feasible: bool


def assess_gap(env, target_chain: LaneChain, params: BehaviorParams) -> GapAssessment:
    """Judge whether the ego fits into the target lane right now.

    Nearest leader and follower are found by arclength along the target
    thread; distances are bumper to bumper and clamped at zero.
    """
    s_ego, _ = target_chain.project_extended(env.ego.pose.position)
    lead = follow = None
    for obj in env.objects:
        if obj.is_virtual_stop:
            continue
        s_o, lat_o = target_chain.project_extended(obj.pose.position)
        if abs(lat_o) >= 0.5 * target_chain.width_at(s_o):
            continue
        rel = s_o - s_ego
        if rel >= 0.0 and (lead is None or rel < lead[0]):
            lead = (rel, obj)
        elif rel < 0.0 and (follow is None or rel > follow[0]):
            follow = (rel, obj)
    d_ahead = ttc_ahead = math.inf
    if lead is not None:
        d_ahead = max(lead[0] - 0.5 * (env.ego.length + lead[1].length), 0.0)
        ttc_ahead = time_to_collision(d_ahead, env.ego.speed - lead[1].speed)
    d_behind = ttc_behind = math.inf
    if follow is not None:
        d_behind = max(-follow[0] - 0.5 * (env.ego.length + follow[1].length), 0.0)
        ttc_behind = time_to_collision(d_behind, follow[1].speed - env.ego.speed)
    feasible = (
        d_ahead > params.d_min_ahead
        and d_behind > params.d_min_behind
        and ttc_ahead > params.ttc_min_ahead
        and ttc_behind > params.ttc_min_behind
    )
    return GapAssessment(d_ahead, d_behind, ttc_ahead, ttc_behind, feasible)


# -- cost model --------------------------------------------------------


def expected_average_velocity(
    corridor, ego_speed: float, costs: CostParams, dt: float = PROFILE_DT,
    s_from: float = 0.0,
) -> float:
    """Average speed over the cost horizon when tracking the corridor.

    A point mass accelerates and decelerates at a_comfort toward the
    corridor's velocity objectives; distance covered within the horizon
    divided by the horizon gives the estimate. Corridors that end with a
    forced stop pin the profile to zero at their end. ``s_from`` rates
    only the part of the corridor beyond that arclength, for plans the
    ego is already partway through.
    """
    if corridor.length - s_from <= 1e-9:
        return 0.0
    objectives = corridor.velocity_objectives or assign_velocity_objectives(corridor)
    a = costs.a_comfort
    horizon = costs.horizon

    v_top = max(max(v for _, v in objectives), ego_speed, 1.0)
    s_max = v_top * horizon + 2.0 * PROFILE_GRID
    stations = np.arange(s_from, s_from + s_max, PROFILE_GRID)
    target = np.full(len(stations), math.inf)
    envelope = np.full(len(stations), math.inf)
    for s_j, v_j in objectives:
        target[stations >= s_j] = v_j
        before = stations < s_j
        envelope[before] = np.minimum(
            envelope[before], np.sqrt(v_j * v_j + 2.0 * a * (s_j - stations[before]))
        )
    allow = np.minimum(target, envelope)

    v = max(ego_speed, 0.0)
    s = dist = 0.0
    scale = 1.0 / PROFILE_GRID
    top = len(allow) - 1
    for _ in range(int(round(horizon / dt))):
        v_allow = allow[min(int(s * scale), top)]
        if math.isinf(v_allow):
            v_allow = v
        if v < v_allow:
            v = min(v_allow, v + a * dt)
        elif v > v_allow:
            v = max(v_allow, v - a * dt)
        step = v * dt
        s += step
        dist += step
    return dist / horizon


def urban_cost(
    v_hat: float, n_lane_changes: int, is_lane_change: bool, costs: CostParams
) -> float:
    """Cost of a maneuver option in m/s; lower is better.

    Trades expected average velocity against the lane changes still
    needed afterwards, with a surcharge for options that are themselves
    a lane change.
    """
    j = -v_hat + n_lane_changes * costs.j_lane_change_needed
    if is_lane_change:
        j += costs.j_lane_change_maneuver
    return j


# -- shared block scaffolding -------------------------------------------


class _DrivingBehavior(Behavior):
    def __init__(self, name, params=None, costs=None, highway=False):
        super().__init__(name)
        self.params = params if params is not None else BehaviorParams()
        self.costs = costs if costs is not None else CostParams()
        self.highway = highway
        self._events: list[str] = []

    def pop_events(self) -> list[str]:
        out = self._events
        self._events = []
        return out

    def _matched_lane(self, env) -> str | None:
        """Ego lane with the block's highway flag, or None."""
        lane_id = match_ego_lane(env.world_map, env.ego.pose, env.route)
        if lane_id is None:
            return None
        if env.world_map.lane(lane_id).highway != self.highway:
            return None
        return lane_id

    def _matched_route_lane(self, env) -> str | None:
        lane_id = self._matched_lane(env)
        if lane_id is None:
            return None
        if lane_id not in env.route.hops_by_lane(env.world_map):
            return None
        return lane_id

    def _flagged(self, corridor, env, objects=None):
        objects = env.objects if objects is None else objects
        return flag_objects(corridor, objects, env.ego.length, self.params.t_prediction)


# -- lane keeping and lane changes --------------------------------------


class FollowEgoLane(_DrivingBehavior):
    """Keep the current lane thread along the route."""

    def __init__(self, name="FollowEgoLane", params=None, costs=None, highway=False):
        super().__init__(name, params, costs, highway)

    def invocation_condition(self, env) -> bool:
        return self._matched_route_lane(env) is not None

    def commitment_condition(self, env) -> bool:
        # lane keeping can always go on for as long as it is applicable
        return self.invocation_condition(env)

    def _corridor(self, env, lane_id):
        cor = build_follow_corridor(env.world_map, env.route, lane_id, env.ego.pose)
        assign_velocity_objectives(cor, self.params.a_lat_max)
        return cor

    def command(self, env) -> CorridorCommand:
        lane_id = self._matched_route_lane(env)
        if lane_id is None:
            raise NotApplicable("ego is not on a routable lane")
        cor = self._corridor(env, lane_id)
        variant = self._flagged(cor, env)
        variant.note = "follow-lane"
        return CorridorCommand(cor, variant, objects=list(env.objects))

    def cost_estimate(self, env) -> float:
        lane_id = self._matched_route_lane(env)
        if lane_id is None:
            return math.nan
        cor = self._corridor(env, lane_id)
        v_hat = expected_average_velocity(cor, env.ego.speed, self.costs)
        hops = env.route.hops_by_lane(env.world_map)
        return urban_cost(v_hat, hops[lane_id], False, self.costs)


@dataclass
class _ChangeEpisode:
    start_lane: str
    target_lane: str
    start_chain: LaneChain
    target_chain: LaneChain
    start_ends_with_stop: bool
    d_max: float
    aborted: bool = False
    corridor: Corridor | None = None  # frozen plan the episode tracks


class ChangeLane(_DrivingBehavior):
    """Move into the reachable neighbor lane once a safe gap exists.

    The maneuver is a latched episode: once started, the commitment
    condition holds until the ego rectangle is entirely inside the
    target lane, or entirely back inside the start lane after an abort.
    The gap is monitored during the maneuver and a collapse triggers the
    abort while less than half of the footprint has crossed over.
    """

    def __init__(self, name, direction, params=None, costs=None, highway=False,
                 target_highway=None):
        super().__init__(name, params, costs, highway)
        if direction not in (LEFT, RIGHT):
            raise ValueError(f"unknown direction {direction!r}")
        self.direction = direction
        self.target_highway = highway if target_highway is None else target_highway
        self._episode: _ChangeEpisode | None = None

    # helpers

    def _context(self, env) -> tuple[str, str] | None:
        lane_id = self._matched_lane(env)
        if lane_id is None:
            return None
        target_id, reachable = env.world_map.lane(lane_id).adjacent(self.direction)
        if target_id is None or not reachable:
            return None
        if env.world_map.lane(target_id).highway != self.target_highway:
            return None
        if target_id not in env.route.hops_by_lane(env.world_map):
            return None
        return lane_id, target_id

    def _target_chain(self, env, target_id) -> LaneChain:
        ids, _ = follow_chain(env.world_map, env.route, target_id)
        return LaneChain(env.world_map, ids)

    def _start_chain(self, env, lane_id) -> tuple[LaneChain, bool]:
        try:
            ids, reason = follow_chain(env.world_map, env.route, lane_id)
            stops = reason != "budget"
        except Unroutable:
            ids = plain_chain(env.world_map, lane_id)
            stops = not env.world_map.lane(ids[-1]).successors
        return LaneChain(env.world_map, ids), stops

    def _episode_done(self, env) -> bool:
        ep = self._episode
        goal_chain = ep.start_chain if ep.aborted else ep.target_chain
        return goal_chain.fully_inside(env.ego.pose, env.ego.length, env.ego.width)

    # arbitration interface

    def invocation_condition(self, env) -> bool:
        ctx = self._context(env)
        if ctx is None:
            return False
        chain = self._target_chain(env, ctx[1])
        return assess_gap(env, chain, self.params).feasible

    def commitment_condition(self, env) -> bool:
        return self._episode is not None and not self._episode_done(env)

    def command(self, env) -> CorridorCommand:
        ep = self._episode
        if ep is not None and self._episode_done(env):
            if not ep.aborted:
                self._events.append("laneChangeDone")
            ep = self._episode = None
        if ep is None:
            ctx = self._context(env)
            if ctx is None:
                raise NotApplicable("no reachable neighbor lane to change into")
            lane_id, target_id = ctx
            start_chain, start_stop = self._start_chain(env, lane_id)
            ep = self._episode = _ChangeEpisode(
                start_lane=lane_id,
                target_lane=target_id,
                start_chain=start_chain,
                target_chain=self._target_chain(env, target_id),
                start_ends_with_stop=start_stop,
                d_max=self.params.d_max_lane_change,
            )
            ep.corridor = self._change_corridor(env, ep)
            self._events.append("laneChangeStart")
        elif not ep.aborted:
            gap = assess_gap(env, ep.target_chain, self.params)
            crossed = ep.target_chain.overlap_fraction(
                env.ego.pose, env.ego.length, env.ego.width
            )
            if not gap.feasible and crossed < 0.5:
                ep.aborted = True
                ep.corridor = self._abort_corridor(env, ep)
                self._events.append("laneChangeAbort")

        # the plan is frozen for the episode; replan only when tracking
        # has drifted well off it
        _, lat = ep.corridor.project(env.ego.pose.position)
        if abs(lat) > 2.0 * REPLAN_DEVIATION:
            ep.corridor = (
                self._abort_corridor(env, ep) if ep.aborted
                else self._change_corridor(env, ep)
            )
        variant = self._flagged(ep.corridor, env)
        variant.note = f"lane-change-{self.direction}" + ("-abort" if ep.aborted else "")
        signal = None if ep.aborted else self.direction
        return CorridorCommand(ep.corridor, variant, objects=list(env.objects), turn_signal=signal)

    def _change_corridor(self, env, ep) -> Corridor:
        cor = build_change_corridor(
            env.world_map, env.route, ep.start_lane, self.direction, env.ego.pose, ep.d_max
        )
        assign_velocity_objectives(cor, self.params.a_lat_max)
        return cor

    def _abort_corridor(self, env, ep) -> Corridor:
        s0, _ = ep.start_chain.project(env.ego.pose.position)
        cor = build_chain_corridor(
            env.world_map, ep.start_chain, s0, ep.start_chain.length, ep.start_ends_with_stop
        )
        assign_velocity_objectives(cor, self.params.a_lat_max)
        return cor

    def cost_estimate(self, env) -> float:
        ep = self._episode
        hops = env.route.hops_by_lane(env.world_map)
        if ep is not None and ep.corridor is not None:
            # the initiation surcharge is sunk once the maneuver runs
            n = hops.get(ep.start_lane if ep.aborted else ep.target_lane)
            if n is None:
                return math.nan
            s_ego, _ = ep.corridor.project(env.ego.pose.position)
            v_hat = expected_average_velocity(
                ep.corridor, env.ego.speed, self.costs, s_from=s_ego
            )
            return urban_cost(v_hat, n, False, self.costs)
        ctx = self._context(env)
        if ctx is None:
            return math.nan
        lane_id, target_id = ctx
        try:
            cor = build_change_corridor(
                env.world_map, env.route, lane_id, self.direction,
                env.ego.pose, self.params.d_max_lane_change,
            )
        except (NotApplicable, Unroutable):
            return math.nan
        assign_velocity_objectives(cor, self.params.a_lat_max)
        v_hat = expected_average_velocity(cor, env.ego.speed, self.costs)
        return urban_cost(v_hat, hops[target_id], True, self.costs)

    def lose_control(self, env) -> None:
        ep = self._episode
        if ep is not None and not ep.aborted and self._episode_done(env):
            self._events.append("laneChangeDone")
        self._episode = None


# -- merging through a blocked lane change -------------------------------


class MergeState:
    """State shared by the three phases of one merge sequence."""

    def __init__(self):
        self.active_phases = 0
        self.gap: tuple[str, str] | None = None  # (follower id, leader id)

    @property
    def engaged(self) -> bool:
        return self.active_phases > 0


def _target_members(env, chain: LaneChain) -> list[tuple[float, TrackedObject]]:
    members = []
    for obj in env.objects:
        if obj.is_virtual_stop:
            continue
        s_o, lat_o = chain.project_extended(obj.pose.position)
        if abs(lat_o) < 0.5 * chain.width_at(s_o):
            members.append((s_o, obj))
    members.sort(key=lambda m: m[0])
    return members


class _MergePhase(_DrivingBehavior):
    def __init__(self, name, direction, state, params=None, costs=None, highway=False):
        super().__init__(name, params, costs, highway)
        self.direction = direction
        self.state = state

    def _context(self, env) -> tuple[str, str] | None:
        lane_id = self._matched_lane(env)
        if lane_id is None:
            return None
        target_id, reachable = env.world_map.lane(lane_id).adjacent(self.direction)
        if target_id is None or not reachable:
            return None
        if env.world_map.lane(target_id).highway != self.highway:
            return None
        if target_id not in env.route.hops_by_lane(env.world_map):
            return None
        return lane_id, target_id

    def _target_chain(self, env, target_id) -> LaneChain:
        ids, _ = follow_chain(env.world_map, env.route, target_id)
        return LaneChain(env.world_map, ids)

    def _gap_window(self, env, chain) -> tuple[float, float, float] | None:
        """Center offset, free length and mean speed of the tracked gap."""
        if self.state.gap is None:
            return None
        members = {obj.object_id: (s, obj) for s, obj in _target_members(env, chain)}
        back = members.get(self.state.gap[0])
        front = members.get(self.state.gap[1])
        if back is None or front is None:
            return None
        s_ego, _ = chain.project_extended(env.ego.pose.position)
        lo = back[0] + 0.5 * back[1].length
        hi = front[0] - 0.5 * front[1].length
        if hi <= lo:
            return None
        center = 0.5 * (lo + hi) - s_ego
        speed = 0.5 * (back[1].speed + front[1].speed)
        return center, hi - lo, speed

    def _pick_gap(self, env, chain) -> None:
        """Track the largest gap between target-lane vehicles, nearest first."""
        members = _target_members(env, chain)
        s_ego, _ = chain.project_extended(env.ego.pose.position)
        best = None
        for (s_a, a), (s_b, b) in zip(members, members[1:]):
            lo = s_a + 0.5 * a.length
            hi = s_b - 0.5 * b.length
            if hi <= lo:
                continue
            center = 0.5 * (lo + hi) - s_ego
            key = (-(hi - lo), abs(center))
            if best is None or key < best[0]:
                best = (key, (a.object_id, b.object_id))
        self.state.gap = best[1] if best is not None else None

    def _alignment_command(self, env, lane_id, chain, signal=None) -> CorridorCommand:
        """Keep the lane while matching speed and position with the gap."""
        cor = build_follow_corridor(env.world_map, env.route, lane_id, env.ego.pose)
        objectives = assign_velocity_objectives(cor, self.params.a_lat_max)
        window = self._gap_window(env, chain)
        if window is not None:
            center, _, gap_speed = window
            v_cmd = gap_speed + 0.3 * center
            v_cmd = min(max(v_cmd, 0.0), objectives[0][1])
            cor.velocity_objectives = [(0.0, v_cmd)] + objectives[1:]
        variant = self._flagged(cor, env)
        variant.note = f"merge-{self.direction}"
        return CorridorCommand(cor, variant, objects=list(env.objects), turn_signal=signal)

    def _merge_cost(self, env) -> float:
        ctx = self._context(env)
        if ctx is None:
            return math.nan
        lane_id, target_id = ctx
        try:
            cor = build_change_corridor(
                env.world_map, env.route, lane_id, self.direction,
                env.ego.pose, self.params.d_max_lane_change,
            )
        except (NotApplicable, Unroutable):
            return math.nan
        assign_velocity_objectives(cor, self.params.a_lat_max)
        v_hat = expected_average_velocity(cor, env.ego.speed, self.costs)
        hops = env.route.hops_by_lane(env.world_map)
        return urban_cost(v_hat, hops[target_id], not self.state.engaged, self.costs)

    def cost_estimate(self, env) -> float:
        return self._merge_cost(env)

    def gain_control(self, env) -> None:
        self.state.active_phases += 1

    def lose_control(self, env) -> None:
        self.state.active_phases = max(self.state.active_phases - 1, 0)


class ApproachGap(_MergePhase):
    """Adjust speed until the ego sits beside a usable gap."""

    def invocation_condition(self, env) -> bool:
        ctx = self._context(env)
        if ctx is None:
            return False
        chain = self._target_chain(env, ctx[1])
        if assess_gap(env, chain, self.params).feasible:
            return False  # a plain lane change handles this
        members = _target_members(env, chain)
        fits = env.ego.length + self.params.d_min_ahead + self.params.d_min_behind
        for (s_a, a), (s_b, b) in zip(members, members[1:]):
            if (s_b - 0.5 * b.length) - (s_a + 0.5 * a.length) > fits:
                return True
        return False

    def commitment_condition(self, env) -> bool:
        ctx = self._context(env)
        if ctx is None:
            return False
        chain = self._target_chain(env, ctx[1])
        window = self._gap_window(env, chain)
        if window is None:
            return False
        return abs(window[0]) >= ALIGN_TOLERANCE

    def gain_control(self, env) -> None:
        super().gain_control(env)
        ctx = self._context(env)
        if ctx is not None:
            self._pick_gap(env, self._target_chain(env, ctx[1]))

    def command(self, env) -> CorridorCommand:
        ctx = self._context(env)
        if ctx is None:
            raise NotApplicable("no neighbor lane to merge into")
        lane_id, target_id = ctx
        chain = self._target_chain(env, target_id)
        if self.state.gap is None or self._gap_window(env, chain) is None:
            self._pick_gap(env, chain)
        return self._alignment_command(env, lane_id, chain)


class IndicateIntention(_MergePhase):
    """Announce the merge with the turn signal for a fixed time."""

    def __init__(self, name, direction, state, params=None, costs=None, highway=False):
        super().__init__(name, direction, state, params, costs, highway)
        self._since: float | None = None

    def invocation_condition(self, env) -> bool:
        return self._context(env) is not None

    def commitment_condition(self, env) -> bool:
        if self._since is None:
            return False
        return env.time - self._since < self.params.t_indicate

    def gain_control(self, env) -> None:
        super().gain_control(env)
        self._since = env.time

    def lose_control(self, env) -> None:
        super().lose_control(env)
        self._since = None

    def command(self, env) -> CorridorCommand:
        ctx = self._context(env)
        if ctx is None:
            raise NotApplicable("no neighbor lane to merge into")
        lane_id, target_id = ctx
        chain = self._target_chain(env, target_id)
        return self._alignment_command(env, lane_id, chain, signal=self.direction)


class MergeIntoGap(ChangeLane):
    """Final merge phase; a lane change whose surcharge was already paid."""

    def __init__(self, name, direction, state, params=None, costs=None, highway=False):
        super().__init__(name, direction, params, costs, highway)
        self.state = state

    def cost_estimate(self, env) -> float:
        if self._episode is not None:
            return super().cost_estimate(env)
        ctx = self._context(env)
        if ctx is None:
            return math.nan
        lane_id, target_id = ctx
        try:
            cor = build_change_corridor(
                env.world_map, env.route, lane_id, self.direction,
                env.ego.pose, self.params.d_max_lane_change,
            )
        except (NotApplicable, Unroutable):
            return math.nan
        assign_velocity_objectives(cor, self.params.a_lat_max)
        v_hat = expected_average_velocity(cor, env.ego.speed, self.costs)
        hops = env.route.hops_by_lane(env.world_map)
        return urban_cost(v_hat, hops[target_id], not self.state.engaged, self.costs)

    def gain_control(self, env) -> None:
        self.state.active_phases += 1

    def lose_control(self, env) -> None:
        super().lose_control(env)
        self.state.active_phases = max(self.state.active_phases - 1, 0)


class MergeOntoHighway(ChangeLane):
    """Left change from an ending acceleration lane onto the main lane.

    Structurally a lane change; the extra applicability condition is that
    the current lane chain runs out, so staying is not an option.
    """

    def __init__(self, name="MergeOntoHighway", params=None, costs=None):
        super().__init__(name, LEFT, params, costs, highway=True)

    def invocation_condition(self, env) -> bool:
        ctx = self._context(env)
        if ctx is None:
            return False
        _, ends = self._start_chain(env, ctx[0])
        return ends and super().invocation_condition(env)


# -- intersections -------------------------------------------------------


class CrossIntersection(_DrivingBehavior):
    """Pass an intersection, yielding to conflicting traffic at the entry.

    While approaching, any object whose prediction sweeps into the
    corridor turns the entry line into a virtual stop. Once the ego is
    inside the intersection the commitment holds so the box is cleared
    without stopping.
    """

    def __init__(self, name="CrossIntersection", params=None, costs=None):
        super().__init__(name, params, costs)

    def _entry(self, env) -> tuple[str, float, bool] | None:
        """Matched lane, distance to the intersection entry, inside flag."""
        lane_id = self._matched_route_lane(env)
        if lane_id is None:
            return None
        if env.world_map.lane(lane_id).intersection_arm:
            return lane_id, 0.0, True
        ids, _ = follow_chain(env.world_map, env.route, lane_id)
        chain = LaneChain(env.world_map, ids)
        s_ego, _ = chain.project(env.ego.pose.position)
        for s0, s1, seg_lane in chain.segments:
            if s1 <= s_ego or not env.world_map.lane(seg_lane).intersection_arm:
                continue
            rel = s0 - s_ego
            if rel <= self.params.d_intersection_lookahead:
                return lane_id, max(rel, 0.0), False
            return None
        return None

    def invocation_condition(self, env) -> bool:
        return self._entry(env) is not None

    def commitment_condition(self, env) -> bool:
        entry = self._entry(env)
        return entry is not None and entry[2]

    def command(self, env) -> CorridorCommand:
        entry = self._entry(env)
        if entry is None:
            raise NotApplicable("no intersection ahead")
        lane_id, rel, inside = entry
        cor = build_follow_corridor(env.world_map, env.route, lane_id, env.ego.pose)
        assign_velocity_objectives(cor, self.params.a_lat_max)
        objects = list(env.objects)
        variant = self._flagged(cor, env)
        if not inside and any(f.role == YIELD_TO for f in variant.flags):
            s_stop = max(rel - STOP_LINE_OFFSET, 0.1)
            point = cor.point_at(s_stop)
            pose = Pose(float(point[0]), float(point[1]), cor.heading_at(s_stop))
            stop = TrackedObject(
                "intersection-entry", pose, 0.0,
                length=0.3, width=2.0 * cor.half_width_at(s_stop),
                is_virtual_stop=True,
            )
            objects.append(stop)
            variant.flags.append(ObjectFlag(stop.object_id, VIRTUAL_STOP))
        variant.note = "cross-intersection"
        return CorridorCommand(cor, variant, objects=objects)


# -- parking --------------------------------------------------------------


class ParkNearGoal(_DrivingBehavior):
    """Pull into the goal parking spot once the route is nearly done."""

    def __init__(self, name="ParkNearGoal", params=None, costs=None):
        super().__init__(name, params, costs)
        self._traj: TrajectoryCommand | None = None

    def _spot(self, env):
        if env.route.goal_spot is None:
            return None
        return env.world_map.spot(env.route.goal_spot)

    def _distance(self, env, spot) -> float:
        return math.hypot(
            env.ego.pose.x - spot.pose.x, env.ego.pose.y - spot.pose.y
        )

    def invocation_condition(self, env) -> bool:
        spot = self._spot(env)
        if spot is None:
            return False
        dist = self._distance(env, spot)
        if not (self.params.r_min_parking < dist < self.params.r_max_parking):
            return False
        if env.ego.speed >= self.params.v_max_parking:
            return False
        for obj in env.objects:
            if obj.is_virtual_stop:
                continue
            near_ego = math.hypot(
                obj.pose.x - env.ego.pose.x, obj.pose.y - env.ego.pose.y
            )
            near_spot = math.hypot(obj.pose.x - spot.pose.x, obj.pose.y - spot.pose.y)
            if min(near_ego, near_spot) < self.params.r_min_freespace:
                return False
        return True

    def commitment_condition(self, env) -> bool:
        spot = self._spot(env)
        if spot is None or self._traj is None:
            return False
        return self._distance(env, spot) > self.params.r_min_parking

    def command(self, env) -> TrajectoryCommand:
        spot = self._spot(env)
        if spot is None:
            raise NotApplicable("the route has no parking spot")
        if self._traj is not None:
            expected, _ = self._traj.pose_at(env.time)
            deviation = math.hypot(
                expected.x - env.ego.pose.x, expected.y - env.ego.pose.y
            )
            if deviation > REPLAN_DEVIATION:
                self._traj = None
        if self._traj is None:
            poses, direction = arc_line_path(
                env.ego.pose, spot.pose, self.params.r_turn_parking
            )
            self._traj = timed_trajectory(
                poses, direction, self.params.v_parking, env.time, note="park"
            )
        return self._traj

    def lose_control(self, env) -> None:
        spot = self._spot(env)
        if (
            self._traj is not None
            and spot is not None
            and self._distance(env, spot) <= self.params.r_min_parking
        ):
            self._events.append("parked")
        self._traj = None


class LeaveGarage(_DrivingBehavior):
    """Drive from an off-lane start spot onto its entry lane."""

    ENTRY_AHEAD = 8.0  # m past the spot projection to aim at

    def __init__(self, name="LeaveGarage", params=None, costs=None):
        super().__init__(name, params, costs)
        self._traj: TrajectoryCommand | None = None
        self._entry_lane: str | None = None

    def _start_spot(self, env):
        if match_ego_lane(env.world_map, env.ego.pose, env.route) is not None:
            return None
        best = None
        for spot in env.world_map.parking_spots.values():
            if spot.entry_lane is None:
                continue
            if spot.spot_id == env.route.goal_spot:
                # the mission ends here, do not drive off again
                continue
            dist = math.hypot(
                spot.pose.x - env.ego.pose.x, spot.pose.y - env.ego.pose.y
            )
            if dist < self.params.r_max_parking and (best is None or dist < best[0]):
                best = (dist, spot)
        return None if best is None else best[1]

    def invocation_condition(self, env) -> bool:
        return self._start_spot(env) is not None

    def commitment_condition(self, env) -> bool:
        if self._traj is None or self._entry_lane is None:
            return False
        matched = match_ego_lane(env.world_map, env.ego.pose, env.route)
        return matched != self._entry_lane

    def command(self, env) -> TrajectoryCommand:
        if self._traj is not None:
            expected, _ = self._traj.pose_at(env.time)
            deviation = math.hypot(
                expected.x - env.ego.pose.x, expected.y - env.ego.pose.y
            )
            if deviation > REPLAN_DEVIATION:
                self._traj = None
        if self._traj is None:
            spot = self._start_spot(env)
            if spot is None:
                raise NotApplicable("ego is not at a start spot")
            lane = env.world_map.lane(spot.entry_lane)
            s_spot, _ = lane.project(spot.pose.position)
            s_target = min(s_spot + self.ENTRY_AHEAD, lane.length - 0.5)
            point = lane.point_at(s_target)
            target = Pose(float(point[0]), float(point[1]), lane.heading_at(s_target))
            poses, direction = arc_line_path(
                env.ego.pose, target, self.params.r_turn_parking
            )
            self._traj = timed_trajectory(
                poses, direction, self.params.v_parking, env.time, note="depart"
            )
            self._entry_lane = spot.entry_lane
        return self._traj

    def lose_control(self, env) -> None:
        if (
            self._traj is not None
            and self._entry_lane is not None
            and match_ego_lane(env.world_map, env.ego.pose, env.route) == self._entry_lane
        ):
            self._events.append("departed")
        self._traj = None
        self._entry_lane = None


# -- collision handling ----------------------------------------------------


def _advance_straight(pose: Pose, speed: float, t: float) -> Pose:
    return Pose(
        pose.x + speed * t * math.cos(pose.heading),
        pose.y + speed * t * math.sin(pose.heading),
        pose.heading,
    )


def _evade_pose(pose: Pose, speed: float, offset: float, t: float, ramp: float) -> Pose:
    base = _advance_straight(pose, speed, t)
    lateral = offset * min(t / ramp, 1.0)
    return Pose(
        base.x - lateral * math.sin(pose.heading),
        base.y + lateral * math.cos(pose.heading),
        pose.heading,
    )


@dataclass(frozen=True)
class CollisionThreat:
    object_id: str
    ttc: float  # s until first footprint overlap at constant motion
    distance: float  # m traveled by the ego until then
    impact_speed: float  # m/s remaining if braking at a_emergency from now


class CollisionMonitor:
    """Sweeps predicted footprints to anticipate collisions.

    One instance is shared by the emergency blocks so the sweep runs at
    most once per snapshot.
    """

    EVADE_RAMP = 1.0  # s to reach the full lateral offset

    def __init__(self, params: BehaviorParams | None = None):
        self.params = params if params is not None else BehaviorParams()
        self._cache: tuple[tuple[float, int], CollisionThreat | None] | None = None

    def threat(self, env) -> CollisionThreat | None:
        key = (env.time, id(env))
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1]
        found = self._sweep(env, offset=0.0)
        threat = None
        if found is not None:
            t_hit, obj = found
            dist = env.ego.speed * t_hit
            impact = math.sqrt(
                max(env.ego.speed**2 - 2.0 * self.params.a_emergency * dist, 0.0)
            )
            threat = CollisionThreat(obj.object_id, t_hit, dist, impact)
        self._cache = (key, threat)
        return threat

    def _sweep(self, env, offset: float) -> tuple[float, TrackedObject] | None:
        ego = env.ego
        steps = int(round(SWEEP_HORIZON / SWEEP_DT))
        for i in range(steps + 1):
            t = i * SWEEP_DT
            pose = _evade_pose(ego.pose, ego.speed, offset, t, self.EVADE_RAMP)
            ego_rect = rect_corners(pose.x, pose.y, pose.heading, ego.length, ego.width)
            for obj in env.objects:
                if obj.is_virtual_stop:
                    continue
                p = obj.pose_at(t)
                rect = rect_corners(p.x, p.y, p.heading, obj.length, obj.width)
                if rects_overlap(ego_rect, rect):
                    return t, obj
        return None

    def evade_offset(self, env, max_offset: float) -> float | None:
        """Smallest collision-free lateral offset, left preferred on ties."""
        if self.threat(env) is None:
            return None
        step = 0.25
        n = int(max_offset / step)
        for k in range(1, n + 1):
            for sign in (1.0, -1.0):
                delta = sign * k * step
                if self._sweep(env, offset=delta) is None:
                    return delta
        return None


class EmergencyStop(_DrivingBehavior):
    """Full brake in-lane when a collision is anticipated."""

    def __init__(self, monitor, name="EmergencyStop", params=None, costs=None):
        super().__init__(name, params, costs)
        self.monitor = monitor

    def invocation_condition(self, env) -> bool:
        threat = self.monitor.threat(env)
        return threat is not None and threat.ttc < self.params.ttc_emergency

    def commitment_condition(self, env) -> bool:
        return env.ego.speed > 0.05

    def command(self, env) -> TrajectoryCommand:
        points = []
        t = env.time
        pose = env.ego.pose
        v = env.ego.speed
        dt = 0.1
        s = 0.0
        while v > 0.0:
            points.append(TrajectoryPoint(t, *_advance_pose(pose, s), v))
            v = max(v - self.params.a_emergency * dt, 0.0)
            s += v * dt
            t += dt
        points.append(TrajectoryPoint(t, *_advance_pose(pose, s), 0.0))
        points.append(TrajectoryPoint(t + 1.0, *_advance_pose(pose, s), 0.0))
        return TrajectoryCommand(points, note="emergency-stop")

    def cost_estimate(self, env) -> float:
        threat = self.monitor.threat(env)
        return 0.0 if threat is None else threat.impact_speed


class EvadeObject(_DrivingBehavior):
    """Swerve around an obstacle when an offset path is free."""

    def __init__(self, monitor, name="EvadeObject", params=None, costs=None):
        super().__init__(name, params, costs)
        self.monitor = monitor
        self._traj: TrajectoryCommand | None = None

    def _max_offset(self, env) -> float:
        lane_id = match_ego_lane(env.world_map, env.ego.pose, env.route)
        width = env.world_map.lane(lane_id).width if lane_id is not None else 3.5
        return 0.5 * width

    def invocation_condition(self, env) -> bool:
        threat = self.monitor.threat(env)
        if threat is None or threat.ttc >= self.params.ttc_emergency:
            return False
        return self.monitor.evade_offset(env, self._max_offset(env)) is not None

    def commitment_condition(self, env) -> bool:
        return self._traj is not None and env.time < self._traj.points[-1].t

    def command(self, env) -> TrajectoryCommand:
        if self._traj is None:
            offset = self.monitor.evade_offset(env, self._max_offset(env))
            if offset is None:
                raise NotApplicable("no free evade path")
            points = []
            steps = int(round(SWEEP_HORIZON / SWEEP_DT))
            for i in range(steps + 1):
                t = i * SWEEP_DT
                pose = _evade_pose(
                    env.ego.pose, env.ego.speed, offset, t, CollisionMonitor.EVADE_RAMP
                )
                points.append(
                    TrajectoryPoint(env.time + t, pose.x, pose.y, pose.heading, env.ego.speed)
                )
            self._traj = TrajectoryCommand(points, note="evade")
        return self._traj

    def cost_estimate(self, env) -> float:
        # an accepted evade path is collision free, so no damage is expected
        return 0.0

    def lose_control(self, env) -> None:
        self._traj = None


class SafeStop(_DrivingBehavior):
    """Comfortable stop that is applicable in any situation."""

    def __init__(self, name="SafeStop", params=None, costs=None):
        super().__init__(name, params, costs)

    def invocation_condition(self, env) -> bool:
        return True

    def commitment_condition(self, env) -> bool:
        return True

    def command(self, env) -> TrajectoryCommand:
        points = []
        t = env.time
        pose = env.ego.pose
        v = env.ego.speed
        a = self.costs.a_comfort
        dt = 0.1
        s = 0.0
        while v > 0.0:
            points.append(TrajectoryPoint(t, *_advance_pose(pose, s), v))
            v = max(v - a * dt, 0.0)
            s += v * dt
            t += dt
        points.append(TrajectoryPoint(t, *_advance_pose(pose, s), 0.0))
        points.append(TrajectoryPoint(t + 1.0, *_advance_pose(pose, s), 0.0))
        return TrajectoryCommand(points, note="safe-stop")


def _advance_pose(pose: Pose, s: float) -> tuple[float, float, float]:
    return (
        pose.x + s * math.cos(pose.heading),
        pose.y + s * math.sin(pose.heading),
        pose.heading,
    )
