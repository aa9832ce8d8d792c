"""Closed-loop desk-scale simulation around the arbitration graph.

One loop: build an environment snapshot, let the graph pick a command,
move the ego with a kinematic follower, advance the scripted agents,
and keep a full per-tick record. Corridor commands are tracked with a
pure-pursuit steer and a simple longitudinal rule; trajectory commands
are followed exactly (controller design is out of scope here).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .arbitration import NoApplicableBehavior, SelectionTrace
from .assembly import GraphBundle
from .corridor import ACC_LEADING, TARGET_LEADING, VIRTUAL_STOP, allowed_speed
from .geometry import Pose, normalize_angle, rects_overlap
from .world import (
    EgoState,
    EnvironmentSnapshot,
    LaneGraphMap,
    Route,
    TrackedObject,
    predict_constant_velocity,
)

LOOKAHEAD_MIN = 5.0  # m, pure pursuit lookahead floor
LOOKAHEAD_TIME = 1.0  # s, speed-proportional lookahead
MAX_CURVATURE = 0.26  # 1/m, steering limit of the kinematic model
TIME_GAP = 2.0  # s, following gap behind a leading vehicle
GAP_OFFSET = 5.0  # m, standstill margin of the time-gap rule
GAP_GAIN = 0.25  # 1/s, how fast the gap error maps to speed
BRAKE_LIMIT = 6.0  # m/s^2, service braking in corridor mode
HOLD_BACK = 0.5  # m, extra margin kept before a stop marker
STOP_EPS = 0.5  # m, dead band that pins the ego at a terminal stop
STANDSTILL_SPEED = 0.05  # m/s
STANDSTILL_HOLD = 3.0  # s of standstill that ends a run
GOAL_RADIUS = 10.0  # m, "close enough" for termination checks
PREDICTION_HORIZON = 8.0  # s, constant-velocity prediction length
PREDICTION_DT = 0.25  # s


@dataclass
class SimConfig:
    dt: float = 0.1  # s
    max_duration: float = 60.0  # s
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.dt <= 0.5:
            raise ValueError("dt must be in (0, 0.5]")
        if self.max_duration <= 0.0:
            raise ValueError("max_duration must be positive")


@dataclass
class Agent:
    """A scripted traffic participant.

    Moves along its own heading; the speed starts at ``obj.speed`` and
    switches to each scheduled value once its time is reached.
    """

    obj: TrackedObject
    schedule: tuple[tuple[float, float], ...] = ()

    def speed_at(self, t: float) -> float:
        speed = self.obj.speed
        for t_switch, value in self.schedule:
            if t >= t_switch:
                speed = value
        return speed


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    detail: str = ""


@dataclass
class TickRecord:
    time: float
    ego: EgoState
    trace: SelectionTrace
    note: str


@dataclass
class RunTrace:
    ticks: list[TickRecord] = field(default_factory=list)
    events: list[SimEvent] = field(default_factory=list)
    outcome: str = ""

    def event_kinds(self) -> list[str]:
        return [e.kind for e in self.events]

    def first(self, kind: str) -> SimEvent | None:
        for event in self.events:
            if event.kind == kind:
                return event
        return None

    def leaf_at(self, i: int) -> str:
        return self.ticks[i].trace.active_leaf


def detect_collision(env: EnvironmentSnapshot):
    """First real object overlapping the ego, with the relative speed."""
    ego_rect = env.ego.footprint()
    vx = env.ego.speed * math.cos(env.ego.pose.heading)
    vy = env.ego.speed * math.sin(env.ego.pose.heading)
    for obj in env.objects:
        if obj.is_virtual_stop:
            continue
        if rects_overlap(ego_rect, obj.footprint()):
            rel = math.hypot(
                vx - obj.speed * math.cos(obj.pose.heading),
                vy - obj.speed * math.sin(obj.pose.heading),
            )
            return obj.object_id, rel
    return None


def step_ego_corridor(ego: EgoState, cmd, dt: float, a_comfort: float = 2.0) -> EgoState:
    """One kinematic update tracking a corridor command."""
    cor = cmd.corridor
    s, _ = cor.project(ego.pose.position)
    v = max(ego.speed, 0.0)

    v_des = allowed_speed(cor.velocity_objectives, s, a_comfort, fallback=v)
    if cor.ends_with_stop and cor.length - s < STOP_EPS:
        v_des = 0.0
    by_id = {o.object_id: o for o in cmd.objects}
    for flag in cmd.variant.flags:
        obj = by_id.get(flag.object_id)
        if obj is None:
            continue
        s_obj, _ = cor.project(obj.pose.position)
        if flag.role in (ACC_LEADING, TARGET_LEADING) and s_obj > s:
            gap = s_obj - s - 0.5 * (ego.length + obj.length)
            wanted = TIME_GAP * v + GAP_OFFSET
            v_des = min(v_des, max(obj.speed + GAP_GAIN * (gap - wanted), 0.0))
        elif flag.role == VIRTUAL_STOP:
            margin = s_obj - s - 0.5 * ego.length - HOLD_BACK
            v_des = min(v_des, math.sqrt(2.0 * a_comfort * max(margin, 0.0)))
    v_des = min(v_des, v + a_comfort * dt)
    v_new = max(v_des, v - BRAKE_LIMIT * dt, 0.0)

    lookahead = max(LOOKAHEAD_MIN, v * LOOKAHEAD_TIME)
    target = cor.point_at(s + lookahead)
    alpha = normalize_angle(
        math.atan2(target[1] - ego.pose.y, target[0] - ego.pose.x) - ego.pose.heading
    )
    kappa = 2.0 * math.sin(alpha) / lookahead
    kappa = max(-MAX_CURVATURE, min(MAX_CURVATURE, kappa))

    heading = normalize_angle(ego.pose.heading + v_new * kappa * dt)
    x = ego.pose.x + v_new * math.cos(heading) * dt
    y = ego.pose.y + v_new * math.sin(heading) * dt
    return replace(ego, pose=Pose(x, y, heading), speed=v_new)


def step_ego_trajectory(ego: EgoState, cmd, t_next: float) -> EgoState:
    """Idealized tracking: place the ego on the trajectory at t_next."""
    pose, speed = cmd.pose_at(t_next)
    return replace(ego, pose=pose, speed=speed)


def _object_states(agents: list[Agent], poses: list[Pose], t: float) -> list[TrackedObject]:
    out = []
    for agent, pose in zip(agents, poses):
        obj = replace(agent.obj, pose=pose, speed=agent.speed_at(t))
        if not obj.is_virtual_stop:
            obj.prediction = predict_constant_velocity(obj, PREDICTION_HORIZON, PREDICTION_DT)
        out.append(obj)
    return out


def run_simulation(
    world_map: LaneGraphMap,
    route: Route,
    start: EgoState,
    agents: list[Agent],
    bundle: GraphBundle,
    config: SimConfig | None = None,
) -> RunTrace:
    """Run the closed loop until the ego is done, crashes, or times out."""
    config = config or SimConfig()
    config.validate()
    dt = config.dt
    a_comfort = bundle.config.costs.a_comfort

    goal = route.goal_pose
    if route.goal_spot is not None:
        goal = world_map.spot(route.goal_spot).pose

    trace = RunTrace()
    ego = start
    poses = [agent.obj.pose for agent in agents]
    parked = False
    standstill = 0.0
    previous_leaf = ""
    steps = int(round(config.max_duration / dt))

    for i in range(steps + 1):
        t = i * dt
        objects = _object_states(agents, poses, t)
        env = EnvironmentSnapshot(world_map, route, ego, objects, time=t)

        hit = detect_collision(env)
        if hit is not None:
            trace.events.append(SimEvent(t, "collision", hit[0]))
            trace.outcome = "collision"
            break

        try:
            command, selection = bundle.step(env)
        except NoApplicableBehavior as exc:
            trace.events.append(SimEvent(t, "fatal", str(exc)))
            trace.outcome = "fatal"
            break

        if command.kind == "corridor":
            note = command.variant.note
        else:
            note = command.note
        trace.ticks.append(TickRecord(t, ego, selection, note))

        for leaf, kind in bundle.drain_events():
            trace.events.append(SimEvent(t, kind, leaf))
        leaf = selection.active_leaf
        if leaf == "SafeStop" and previous_leaf != "SafeStop":
            trace.events.append(SimEvent(t, "safeStopEngaged", leaf))
        previous_leaf = leaf
        parked = parked or any(e.kind == "parked" for e in trace.events)

        resting = (
            leaf == "SafeStop"
            or parked
            or math.hypot(ego.pose.x - goal.x, ego.pose.y - goal.y) < GOAL_RADIUS
        )
        if abs(ego.speed) < STANDSTILL_SPEED and resting:
            standstill += dt
            if standstill >= STANDSTILL_HOLD:
                trace.outcome = "standstill"
                break
        else:
            standstill = 0.0

        if t >= config.max_duration:
            trace.outcome = "maxDuration"
            break

        if command.kind == "corridor":
            ego = step_ego_corridor(ego, command, dt, a_comfort)
        else:
            ego = step_ego_trajectory(ego, command, t + dt)
        next_poses = []
        for agent, pose in zip(agents, poses):
            speed = agent.speed_at(t)
            next_poses.append(
                Pose(
                    pose.x + speed * math.cos(pose.heading) * dt,
                    pose.y + speed * math.sin(pose.heading) * dt,
                    pose.heading,
                )
            )
        poses = next_poses

    if not trace.outcome:
        trace.outcome = "maxDuration"
    return trace
