"""Shared test utilities: scene builders and reference integrators."""
import math

from drivearb.geometry import Pose
from drivearb.world import (
    EgoState,
    EnvironmentSnapshot,
    TrackedObject,
    predict_constant_velocity,
)


def profile_average_speed(objectives, ego_speed, accel, horizon, dt=0.001):
    """Small-step reference integration of the speed-profile model.

    Deliberately self-contained (no calls into the package) so it can
    serve as an independent oracle for the implementation.
    """

    def allow(s):
        target = math.inf
        envelope = math.inf
        for s_j, v_j in objectives:
            if s_j <= s:
                target = v_j
            else:
                envelope = min(envelope, math.sqrt(v_j * v_j + 2.0 * accel * (s_j - s)))
        return min(target, envelope)

    v = max(ego_speed, 0.0)
    s = dist = 0.0
    for _ in range(int(round(horizon / dt))):
        va = allow(s)
        if math.isinf(va):
            va = v
        if v < va:
            v = min(va, v + accel * dt)
        elif v > va:
            v = max(va, v - accel * dt)
        step = v * dt
        s += step
        dist += step
    return dist / horizon


def env_of(world_map, route, pose, speed, objects=(), time=0.0):
    return EnvironmentSnapshot(world_map, route, EgoState(pose, speed), list(objects), time)


def mover(object_id, x, y, heading, speed, horizon=8.0, **kw):
    obj = TrackedObject(object_id, Pose(x, y, heading), speed, **kw)
    obj.prediction = predict_constant_velocity(obj, horizon, 0.25)
    return obj
