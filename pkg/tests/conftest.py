import math

import numpy as np
import pytest

from drivearb.geometry import Pose
from drivearb.world import Lane, LaneGraphMap, ParkingSpot, Route


def straight(x0, y, x1, n=2):
    xs = np.linspace(x0, x1, n)
    return np.column_stack([xs, np.full(n, float(y))])


def make_lane(lane_id, x0, y, x1, width=3.5, limit=13.89, **kw):
    return Lane(lane_id, straight(x0, y, x1), width, limit, **kw)


@pytest.fixture
def two_lane_map():
    """Two parallel eastbound lanes, 200 m, mutually reachable."""
    a = make_lane("A", 0, 0.0, 200, adjacent_right="B", right_reachable=True)
    b = make_lane("B", 0, -3.5, 200, adjacent_left="A", left_reachable=True)
    return LaneGraphMap({"A": a, "B": b})


@pytest.fixture
def exit_map():
    """Two eastbound lanes; only the right one continues into the exit.

    The left lane is split so that lateral reachability ends after 74 m,
    mirroring a lane-change window that closes ahead of a turn.
    """
    ul1 = make_lane("UL1", 0, 0.0, 34, adjacent_right="UR1", right_reachable=True)
    ul2 = make_lane("UL2", 34, 0.0, 74, adjacent_right="UR2", right_reachable=True,
                    successors=[])
    ul1.successors = ["UL2"]
    ul2.successors = ["UL3"]
    ul3 = make_lane("UL3", 74, 0.0, 134, adjacent_right="UR3", right_reachable=False)
    ur1 = make_lane("UR1", 0, -3.5, 34, adjacent_left="UL1", left_reachable=True,
                    successors=["UR2"])
    ur2 = make_lane("UR2", 34, -3.5, 74, adjacent_left="UL2", left_reachable=True,
                    successors=["UR3"])
    ur3 = make_lane("UR3", 74, -3.5, 134, adjacent_left="UL3", left_reachable=False,
                    successors=["TA"])
    # exit arm: quarter turn to the south, then straight, 109 m in total
    from drivearb.geometry import polyline_length

    r = 12.0
    arc = np.array(
        [
            [134.0 + r * math.sin(theta), -15.5 + r * math.cos(theta)]
            for theta in np.linspace(0.0, 0.5 * math.pi, 25)
        ]
    )
    straight_len = 109.0 - polyline_length(arc)
    tail = np.array([[146.0, -15.5 - straight_len]])
    ta = Lane("TA", np.vstack([arc, tail]), 3.5, 8.33, successors=[])
    lanes = {l.lane_id: l for l in [ul1, ul2, ul3, ur1, ur2, ur3, ta]}
    return LaneGraphMap(lanes)


@pytest.fixture
def exit_route(exit_map):
    goal_lane = exit_map.lane("TA")
    end = goal_lane.centerline[-1]
    return Route(
        ["UL1", "UR1", "UR2", "UR3", "TA"],
        Pose(float(end[0]), float(end[1]), -0.5 * math.pi),
    )


@pytest.fixture
def parking_map():
    lane = make_lane("P1", 0, 0.0, 80, limit=8.33)
    spot = ParkingSpot("S1", Pose(88.0, -5.0, 0.0), entry_lane="P1")
    return LaneGraphMap({"P1": lane}, {"S1": spot})
