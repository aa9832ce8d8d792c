import math

import pytest

from drivearb.geometry import Pose, normalize_angle
from drivearb.parking import arc_line_path, path_length, timed_trajectory


def _end_matches(poses, goal, pos_tol=0.05, ang_tol=0.05):
    last = poses[-1]
    assert math.hypot(last.x - goal.x, last.y - goal.y) < pos_tol
    assert abs(normalize_angle(last.heading - goal.heading)) < ang_tol


def test_straight_goal_gives_straight_path():
    start = Pose(0.0, 0.0, 0.0)
    goal = Pose(10.0, 0.0, 0.0)
    poses, direction = arc_line_path(start, goal, radius=6.0)
    assert direction == 1
    assert path_length(poses) == pytest.approx(10.0, abs=1e-6)
    assert max(abs(p.y) for p in poses) < 1e-9
    _end_matches(poses, goal)


def test_u_turn_is_half_circle():
    # goal one diameter to the left, facing back: a single half circle
    r = 1.0
    start = Pose(0.0, 0.0, 0.0)
    goal = Pose(0.0, 2.0 * r, math.pi)
    poses, direction = arc_line_path(start, goal, radius=r)
    assert direction == 1
    # polyline length is chordal, short of the true arc by about step^2 / 24
    assert path_length(poses) == pytest.approx(math.pi * r, abs=0.01)
    _end_matches(poses, goal, pos_tol=1e-6, ang_tol=1e-6)


def test_offset_goal_reaches_pose():
    start = Pose(78.0, 0.0, 0.0)
    goal = Pose(88.0, -5.0, 0.0)
    poses, _ = arc_line_path(start, goal, radius=6.0)
    _end_matches(poses, goal)


def test_reverse_preferred_for_goal_behind():
    start = Pose(0.0, 0.0, 0.0)
    goal = Pose(-8.0, 0.0, 0.0)
    poses, direction = arc_line_path(start, goal, radius=6.0)
    assert direction == -1
    assert path_length(poses) == pytest.approx(8.0, abs=1e-6)
    _end_matches(poses, goal)


def test_path_curvature_bounded_by_radius():
    start = Pose(0.0, 0.0, 0.0)
    goal = Pose(9.0, -6.0, -0.4)
    r = 5.0
    poses, _ = arc_line_path(start, goal, radius=r, step=0.1)
    for a, b in zip(poses, poses[1:]):
        ds = math.hypot(b.x - a.x, b.y - a.y)
        if ds < 1e-9:
            continue
        dh = abs(normalize_angle(b.heading - a.heading))
        # ds is a chord, slightly shorter than the arc it subtends
        assert dh / ds <= (1.0 / r) * (1.0 + 1e-4)


def test_timed_trajectory_is_monotone_and_ends_stopped():
    start = Pose(0.0, 0.0, 0.0)
    goal = Pose(12.0, 2.0, 0.0)
    poses, direction = arc_line_path(start, goal, radius=6.0)
    cmd = timed_trajectory(poses, direction, speed=1.0, t_start=3.0, note="park")
    assert cmd.note == "park"
    times = [p.t for p in cmd.points]
    assert times == sorted(times)
    assert cmd.points[0].t == 3.0
    assert cmd.points[-1].speed == 0.0
    # constant commanded speed along the way
    assert all(p.speed == pytest.approx(1.0) for p in cmd.points[:-1])
    pose_mid, speed_mid = cmd.pose_at(0.5 * (times[0] + times[-2]))
    assert speed_mid == pytest.approx(1.0)


def test_reverse_trajectory_has_negative_speed():
    start = Pose(0.0, 0.0, 0.0)
    goal = Pose(-8.0, 0.0, 0.0)
    poses, direction = arc_line_path(start, goal, radius=6.0)
    cmd = timed_trajectory(poses, direction, speed=1.0, t_start=0.0)
    assert all(p.speed == pytest.approx(-1.0) for p in cmd.points[:-1])
    # the pose heading stays forward-facing while backing up
    assert all(abs(normalize_angle(p.heading)) < 0.01 for p in cmd.points)
