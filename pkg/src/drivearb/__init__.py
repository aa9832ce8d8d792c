"""Hierarchical behavior arbitration for automated driving.

The package has three layers: a generic arbitration core (behavior
blocks composed under priority, cost, sequence and random arbitrators),
a driving domain on top of a lane-graph map (corridors, cost model,
behavior blocks, the assembled arbitration graph), and a small
closed-loop kinematic simulator with scenario files, trace
serialization and figure rendering around it.
"""

from .arbitration import (
    Arbitrator,
    ArbitrationGraph,
    Behavior,
    NoApplicableBehavior,
    NodeTrace,
    SelectionTrace,
)
from .assembly import GraphBundle, GraphConfig, build_automated_driving_graph
from .behaviors import BehaviorParams, CostParams, expected_average_velocity, urban_cost
from .corridor import Corridor, CorridorCommand, NotApplicable
from .geometry import Pose
from .scenario import (
    ScenarioError,
    ScenarioFile,
    ScenarioFormatError,
    bundled_scenarios,
    emit_scenario,
    load_bundled,
    parse_scenario,
    parse_scenario_text,
    resolve_scenario,
)
from .simulator import (
    Agent,
    RunTrace,
    SimConfig,
    SimEvent,
    TickRecord,
    run_simulation,
)
from .plots import EmptyTraceError, plot_path, plot_timeline
from .traceio import write_snapshots, write_trace_csv
from .units import kmh_to_ms, ms_to_kmh
from .world import (
    EgoState,
    Lane,
    LaneGraphMap,
    ParkingSpot,
    Route,
    TrackedObject,
    match_ego_lane,
    validate_map,
)

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "ArbitrationGraph",
    "Arbitrator",
    "Behavior",
    "BehaviorParams",
    "Corridor",
    "CorridorCommand",
    "CostParams",
    "EgoState",
    "EmptyTraceError",
    "GraphBundle",
    "GraphConfig",
    "Lane",
    "LaneGraphMap",
    "NoApplicableBehavior",
    "NodeTrace",
    "NotApplicable",
    "ParkingSpot",
    "Pose",
    "Route",
    "RunTrace",
    "ScenarioError",
    "ScenarioFile",
    "ScenarioFormatError",
    "SelectionTrace",
    "SimConfig",
    "SimEvent",
    "TickRecord",
    "TrackedObject",
    "build_automated_driving_graph",
    "bundled_scenarios",
    "emit_scenario",
    "expected_average_velocity",
    "kmh_to_ms",
    "load_bundled",
    "match_ego_lane",
    "ms_to_kmh",
    "parse_scenario",
    "parse_scenario_text",
    "plot_path",
    "plot_timeline",
    "resolve_scenario",
    "run_simulation",
    "urban_cost",
    "validate_map",
    "write_snapshots",
    "write_trace_csv",
]
