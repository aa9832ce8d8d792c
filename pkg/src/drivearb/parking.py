"""Arc-line path construction for low-speed maneuvers.

Paths are composed of minimum-radius arcs and straight segments between
two poses (the four CSC words). Planning assumes a static environment;
callers gate on free space before asking for a path. A reverse maneuver
is the forward path from goal to start traversed in the opposite order,
so headings stay vehicle-forward while the speed goes negative.
"""
from __future__ import annotations

import math

from .corridor import TrajectoryCommand, TrajectoryPoint
from .geometry import Pose, normalize_angle

PATH_STEP = 0.25  # m
REVERSE_PENALTY = 1.3


def _mod2pi(x: float) -> float:
    return x % (2.0 * math.pi)


def _lsl(alpha, beta, d):
    p2 = 2.0 + d * d - 2.0 * math.cos(alpha - beta) + 2.0 * d * (math.sin(alpha) - math.sin(beta))
    if p2 < 0.0:
        return None
    th = math.atan2(math.cos(beta) - math.cos(alpha), d + math.sin(alpha) - math.sin(beta))
    return (_mod2pi(-alpha + th), math.sqrt(p2), _mod2pi(beta - th)), "LSL"


def _rsr(alpha, beta, d):
    p2 = 2.0 + d * d - 2.0 * math.cos(alpha - beta) + 2.0 * d * (math.sin(beta) - math.sin(alpha))
    if p2 < 0.0:
        return None
    th = math.atan2(math.cos(alpha) - math.cos(beta), d - math.sin(alpha) + math.sin(beta))
    return (_mod2pi(alpha - th), math.sqrt(p2), _mod2pi(-beta + th)), "RSR"


def _lsr(alpha, beta, d):
    p2 = -2.0 + d * d + 2.0 * math.cos(alpha - beta) + 2.0 * d * (math.sin(alpha) + math.sin(beta))
    if p2 < 0.0:
        return None
    p = math.sqrt(p2)
    th = math.atan2(-math.cos(alpha) - math.cos(beta), d + math.sin(alpha) + math.sin(beta)) - math.atan2(-2.0, p)
    return (_mod2pi(-alpha + th), p, _mod2pi(-_mod2pi(beta) + th)), "LSR"


def _rsl(alpha, beta, d):
    p2 = d * d - 2.0 + 2.0 * math.cos(alpha - beta) - 2.0 * d * (math.sin(alpha) + math.sin(beta))
    if p2 < 0.0:
        return None
    p = math.sqrt(p2)
    th = math.atan2(math.cos(alpha) + math.cos(beta), d - math.sin(alpha) - math.sin(beta)) - math.atan2(2.0, p)
    return (_mod2pi(alpha - th), p, _mod2pi(beta - th)), "RSL"


def _shortest_word(start: Pose, goal: Pose, radius: float):
    dx = goal.x - start.x
    dy = goal.y - start.y
    dist = math.hypot(dx, dy)
    d = dist / radius
    phi = math.atan2(dy, dx) if dist > 1e-9 else 0.0
    alpha = _mod2pi(start.heading - phi)
    beta = _mod2pi(goal.heading - phi)
    best = None
    for planner in (_lsl, _rsr, _lsr, _rsl):
        result = planner(alpha, beta, d)
        if result is None:
            continue
        (t, p, q), word = result
        length = (t + p + q) * radius
        if best is None or length < best[0]:
            best = (length, (t, p, q), word)
    return best


def _roll_out(start: Pose, segments, word: str, radius: float, step: float) -> list[Pose]:
    poses = [start]
    x, y, h = start.x, start.y, start.heading
    for seg_len, mode in zip(segments, word):
        arc = seg_len * radius
        if arc < 1e-9:
            continue
        n = max(int(math.ceil(arc / step)), 1)
        ds = arc / n
        signed_r = radius if mode == "L" else -radius
        for _ in range(n):
            if mode == "S":
                x += ds * math.cos(h)
                y += ds * math.sin(h)
            else:
                turn = ds / signed_r
                x += signed_r * (math.sin(h + turn) - math.sin(h))
                y -= signed_r * (math.cos(h + turn) - math.cos(h))
                h += turn
            poses.append(Pose(x, y, normalize_angle(h)))
    return poses


def arc_line_path(start: Pose, goal: Pose, radius: float, step: float = PATH_STEP):
    """Shortest arc-line path between two poses.

    Returns (poses, direction) with direction +1 for forward driving and
    -1 for reversing. Reversing is chosen only when clearly shorter.
    """
    forward = _shortest_word(start, goal, radius)
    backward = _shortest_word(goal, start, radius)

    use_reverse = False
    if forward is None and backward is not None:
        use_reverse = True
    elif forward is not None and backward is not None:
        use_reverse = backward[0] * REVERSE_PENALTY < forward[0]
    if forward is None and backward is None:
        raise RuntimeError("no arc-line path between the given poses")

    if use_reverse:
        length, segments, word = backward
        rolled = _roll_out(goal, segments, word, radius, step)
        return list(reversed(rolled)), -1
    length, segments, word = forward
    return _roll_out(start, segments, word, radius, step), 1


def timed_trajectory(
    poses: list[Pose], direction: int, speed: float, t_start: float, note: str = ""
) -> TrajectoryCommand:
    """Wrap a path into a constant-speed trajectory command."""
    points = []
    t = t_start
    points.append(TrajectoryPoint(t, poses[0].x, poses[0].y, poses[0].heading, direction * speed))
    for a, b in zip(poses, poses[1:]):
        d = math.hypot(b.x - a.x, b.y - a.y)
        t += d / max(speed, 1e-6)
        points.append(TrajectoryPoint(t, b.x, b.y, b.heading, direction * speed))
    if points:
        last = points[-1]
        points.append(TrajectoryPoint(last.t + 0.5, last.x, last.y, last.heading, 0.0))
    return TrajectoryCommand(points, note=note)


def path_length(poses: list[Pose]) -> float:
    return sum(math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(poses, poses[1:]))
