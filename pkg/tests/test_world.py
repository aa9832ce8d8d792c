import math
import random

import numpy as np
import pytest

from drivearb.geometry import Pose
from drivearb.world import (
    EgoState,
    Lane,
    LaneChain,
    LaneGraphMap,
    Route,
    TrackedObject,
    Unroutable,
    lane_changes_needed,
    match_ego_lane,
    predict_constant_velocity,
    validate_map,
)
from conftest import make_lane, straight


# ------------------------------------------------------------- matching


def test_match_centered_pose(two_lane_map):
    assert match_ego_lane(two_lane_map, Pose(50.0, 0.0, 0.0)) == "A"
    assert match_ego_lane(two_lane_map, Pose(50.0, -3.5, 0.0)) == "B"


def test_match_prefers_containing_lane_when_straddling(two_lane_map):
    # 0.4 m into B: both lanes are candidates, but only B contains the
    # pose, so the route cannot pull the match over to A
    route_a = Route(["A"], Pose(200.0, 0.0, 0.0))
    pose = Pose(50.0, -2.15, 0.0)
    assert match_ego_lane(two_lane_map, pose, route_a) == "B"
    assert match_ego_lane(two_lane_map, pose) == "B"
    # exactly on the boundary neither lane contains; the route decides
    edge = Pose(50.0, -1.75, 0.0)
    assert match_ego_lane(two_lane_map, edge, route_a) == "A"
    route_b = Route(["B"], Pose(200.0, -3.5, 0.0))
    assert match_ego_lane(two_lane_map, edge, route_b) == "B"


def test_match_none_when_far_from_all_lanes(two_lane_map):
    assert match_ego_lane(two_lane_map, Pose(50.0, 30.0, 0.0)) is None
    assert match_ego_lane(two_lane_map, Pose(-40.0, 0.0, 0.0)) is None


def test_match_is_stable_under_small_perturbations(two_lane_map):
    rng = random.Random(5)
    for _ in range(200):
        x = rng.uniform(5.0, 195.0)
        y = rng.uniform(-1.25, 1.25)  # at least 0.5 m inside lane A
        base = match_ego_lane(two_lane_map, Pose(x, y, 0.0))
        assert base == "A"
        dx = rng.uniform(-0.05, 0.05)
        dy = rng.uniform(-0.05, 0.05)
        assert match_ego_lane(two_lane_map, Pose(x + dx, y + dy, 0.0)) == base


# ------------------------------------------------------------- routing


def test_lane_changes_counts_adjacency_hops(exit_map, exit_route):
    assert lane_changes_needed(exit_map, exit_route, "UR1") == 0
    assert lane_changes_needed(exit_map, exit_route, "UR3") == 0
    assert lane_changes_needed(exit_map, exit_route, "UL1") == 1
    assert lane_changes_needed(exit_map, exit_route, "UL2") == 1


def test_lane_changes_unroutable_raises(exit_map, exit_route):
    # UL3 has no successors and its right neighbor is not reachable
    with pytest.raises(Unroutable):
        lane_changes_needed(exit_map, exit_route, "UL3")


def test_lane_changes_three_parallel_lanes():
    l = make_lane("L", 0, 7.0, 400, adjacent_right="M", right_reachable=True)
    m = make_lane("M", 0, 3.5, 400, adjacent_left="L", left_reachable=True,
                  adjacent_right="R", right_reachable=True)
    r = make_lane("R", 0, 0.0, 400, adjacent_left="M", left_reachable=True)
    world = LaneGraphMap({"L": l, "M": m, "R": r})
    route = Route(["L", "M", "R"], Pose(400.0, 0.0, 0.0))
    assert lane_changes_needed(world, route, "L") == 2
    assert lane_changes_needed(world, route, "M") == 1
    assert lane_changes_needed(world, route, "R") == 0


def test_lane_changes_metric_property_on_random_grids():
    rng = random.Random(11)
    for _ in range(30):
        rows = rng.randint(2, 4)
        cols = rng.randint(2, 4)
        lanes = {}
        for i in range(rows):
            for j in range(cols):
                lane_id = f"l{i}_{j}"
                lanes[lane_id] = make_lane(
                    lane_id, j * 50, -3.5 * i, (j + 1) * 50,
                    successors=[f"l{i}_{j + 1}"] if j + 1 < cols else [],
                    adjacent_left=f"l{i - 1}_{j}" if i > 0 else None,
                    left_reachable=i > 0,
                    adjacent_right=f"l{i + 1}_{j}" if i + 1 < rows else None,
                    right_reachable=i + 1 < rows,
                )
        world = LaneGraphMap(lanes)
        goal_row = rng.randrange(rows)
        route = Route(
            [f"l{goal_row}_{j}" for j in range(cols)],
            Pose(cols * 50.0, -3.5 * goal_row, 0.0),
        )
        for i in range(rows):
            for j in range(cols):
                n_here = lane_changes_needed(world, route, f"l{i}_{j}")
                if i + 1 < rows:
                    n_next = lane_changes_needed(world, route, f"l{i + 1}_{j}")
                    assert abs(n_here - n_next) <= 1


# ------------------------------------------------------------- prediction


def test_prediction_pose_count_and_spacing():
    obj = TrackedObject("o", Pose(0.0, 0.0, 0.0), speed=10.0)
    pred = predict_constant_velocity(obj, horizon=5.0, dt=0.5)
    assert len(pred) == 11
    assert pred[0][0] == 0.0
    assert pred[0][1] == obj.pose
    for (t0, p0), (t1, p1) in zip(pred, pred[1:]):
        assert math.isclose(t1 - t0, 0.5)
        assert math.isclose(p1.x - p0.x, 5.0)
        assert p1.y == 0.0


def test_prediction_interpolation():
    obj = TrackedObject("o", Pose(0.0, 0.0, 0.0), speed=4.0)
    obj.prediction = predict_constant_velocity(obj, 4.0, 1.0)
    mid = obj.pose_at(2.5)
    assert math.isclose(mid.x, 10.0)
    late = obj.pose_at(99.0)
    assert math.isclose(late.x, 16.0)


# ------------------------------------------------------------- validation


def test_validate_clean_map(exit_map):
    assert validate_map(exit_map) == []


def test_validate_flags_asymmetric_adjacency():
    a = make_lane("A", 0, 0.0, 50, adjacent_right="B", right_reachable=True)
    b = make_lane("B", 0, -3.5, 50)  # missing the back link
    problems = validate_map(LaneGraphMap({"A": a, "B": b}))
    assert any("does not point back" in p for p in problems)


def test_validate_flags_successor_gap():
    a = make_lane("A", 0, 0.0, 50, successors=["B"])
    b = make_lane("B", 50, -1.0, 100)  # starts 1 m off laterally
    problems = validate_map(LaneGraphMap({"A": a, "B": b}))
    assert any("starts" in p and "away" in p for p in problems)


def test_validate_flags_bad_width_and_dangling_ids():
    a = Lane("A", straight(0, 0, 50), -1.0, 13.89, successors=["NOPE"])
    problems = validate_map(LaneGraphMap({"A": a}))
    assert any("width" in p for p in problems)
    assert any("NOPE" in p for p in problems)


# ------------------------------------------------------------- chains


def test_lane_chain_concatenates_and_projects(exit_map):
    chain = LaneChain(exit_map, ["UR1", "UR2", "UR3"])
    assert math.isclose(chain.length, 134.0)
    s, lat = chain.project([50.0, -3.0])
    assert math.isclose(s, 50.0)
    assert math.isclose(lat, 0.5)
    assert chain.lane_at(10.0) == "UR1"
    assert chain.lane_at(50.0) == "UR2"
    assert chain.lane_at(100.0) == "UR3"


def test_lane_chain_containment_checks(two_lane_map):
    chain = LaneChain(two_lane_map, ["B"])
    inside = Pose(50.0, -3.5, 0.0)
    straddle = Pose(50.0, -1.75, 0.0)
    assert chain.fully_inside(inside, 4.5, 1.8)
    assert not chain.fully_inside(straddle, 4.5, 1.8)
    assert math.isclose(chain.overlap_fraction(straddle, 4.5, 1.8), 0.5, abs_tol=0.01)
    assert chain.overlap_fraction(Pose(50.0, 0.0, 0.0), 4.5, 1.8) == 0.0


def test_ego_footprint_dimensions():
    ego = EgoState(Pose(0.0, 0.0, 0.0), 5.0, length=4.5, width=1.8)
    corners = ego.footprint()
    xs, ys = corners[:, 0], corners[:, 1]
    assert math.isclose(xs.max() - xs.min(), 4.5)
    assert math.isclose(ys.max() - ys.min(), 1.8)
