"""Assembly of the automated-driving arbitration graph.

Builds the standard root graph from a configuration: a priority list
that puts last-resort collision avoidance first, then parking
maneuvers, intersection handling, cost-arbitrated urban and highway
driving, and a safe-stop fallback that is always applicable and always
last. Subtrees can be switched off wholesale; the fallback cannot.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .arbitration import ArbitrationGraph, Arbitrator, BehaviorNode
from .behaviors import (
    ApproachGap,
    BehaviorParams,
    ChangeLane,
    CollisionMonitor,
    CostParams,
    CrossIntersection,
    EmergencyStop,
    EvadeObject,
    FollowEgoLane,
    IndicateIntention,
    LeaveGarage,
    MergeIntoGap,
    MergeOntoHighway,
    MergeState,
    ParkNearGoal,
    SafeStop,
    highway_variant,
)
from .units import kmh_to_ms
from .world import LEFT, RIGHT

HIGHWAY_MARGIN = kmh_to_ms(2.0)  # m/s, default highway hysteresis


@dataclass
class GraphConfig:
    """Which subtrees to build and with what parameters."""

    params: BehaviorParams = field(default_factory=BehaviorParams)
    costs: CostParams = field(default_factory=CostParams)
    urban: bool = True
    highway: bool = True
    parking: bool = True
    emergency: bool = True
    intersection: bool = True
    merge_sequences: bool = True  # the staged merge arms under urban driving
    safe_stop: bool = True
    urban_interruptible: bool = True
    highway_interruptible: bool = True
    urban_margin: float | None = None  # m/s, defaults to costs.hysteresis_margin
    highway_margin: float | None = None  # m/s, defaults to HIGHWAY_MARGIN
    emergency_margin: float = 0.0  # m/s of predicted impact speed

    def validate(self) -> None:
        self.params.validate()
        self.costs.validate()
        if not self.safe_stop:
            raise ValueError("the safe stop fallback cannot be disabled")
        for name in ("urban_margin", "highway_margin", "emergency_margin"):
            value = getattr(self, name)
            if value is not None and value < 0.0:
                raise ValueError(f"{name} must be non-negative")


class GraphBundle:
    """A built graph plus handles the simulator needs around it."""

    def __init__(self, graph: ArbitrationGraph, config: GraphConfig,
                 blocks: dict, monitor: CollisionMonitor | None):
        self.graph = graph
        self.config = config
        self.blocks = blocks  # leaf name -> behavior block
        self.monitor = monitor

    @property
    def root(self) -> Arbitrator:
        return self.graph.root

    def step(self, env):
        return self.graph.step(env)

    def drain_events(self) -> list[tuple[str, str]]:
        """Collect (leaf name, event) pairs queued since the last drain."""
        out = []
        for name, block in self.blocks.items():
            for event in block.pop_events():
                out.append((name, event))
        return out

    def render_tree(self, trace=None) -> str:
        return self.graph.render_tree(trace)


def _merge_sequence(side: str, direction: int, params, costs) -> Arbitrator:
    state = MergeState()
    return Arbitrator.sequence(
        f"MergeIntoLane{side}",
        [
            ApproachGap(f"ApproachGap{side}", direction, state, params, costs),
            IndicateIntention(f"IndicateIntention{side}", direction, state, params, costs),
            MergeIntoGap(f"MergeIntoGap{side}", direction, state, params, costs),
        ],
    )


def build_automated_driving_graph(config: GraphConfig | None = None) -> GraphBundle:
    """Build the standard arbitration graph for the given configuration."""
    config = config or GraphConfig()
    config.validate()
    params, costs = config.params, config.costs

    options: list[BehaviorNode] = []
    monitor = None
    if config.emergency:
        monitor = CollisionMonitor(params)
        options.append(
            Arbitrator.cost_based(
                "AvoidCollisionInLastResort",
                [
                    EmergencyStop(monitor, params=params, costs=costs),
                    EvadeObject(monitor, params=params, costs=costs),
                ],
                hysteresis_margin=config.emergency_margin,
            )
        )
    if config.parking:
        options.append(
            Arbitrator.priority(
                "Parking",
                [LeaveGarage(params=params, costs=costs),
                 ParkNearGoal(params=params, costs=costs)],
                interruptible=False,
            )
        )
    if config.intersection:
        options.append(CrossIntersection(params=params, costs=costs))
    if config.urban:
        margin = config.urban_margin
        if margin is None:
            margin = costs.hysteresis_margin
        urban_options: list[BehaviorNode] = [
            FollowEgoLane(params=params, costs=costs),
            ChangeLane("ChangeLaneLeft", LEFT, params, costs),
            ChangeLane("ChangeLaneRight", RIGHT, params, costs),
        ]
        if config.merge_sequences:
            urban_options.append(_merge_sequence("Left", LEFT, params, costs))
            urban_options.append(_merge_sequence("Right", RIGHT, params, costs))
        options.append(
            Arbitrator.cost_based(
                "UrbanDriving",
                urban_options,
                hysteresis_margin=margin,
                interruptible=config.urban_interruptible,
            )
        )
    if config.highway:
        hw = highway_variant(params)
        margin = HIGHWAY_MARGIN if config.highway_margin is None else config.highway_margin
        options.append(
            Arbitrator.cost_based(
                "HighwayDriving",
                [
                    MergeOntoHighway(params=hw, costs=costs),
                    FollowEgoLane("FollowHighwayLane", hw, costs, highway=True),
                    ChangeLane("ChangeHighwayLaneLeft", LEFT, hw, costs, highway=True),
                    ChangeLane("ChangeHighwayLaneRight", RIGHT, hw, costs, highway=True),
                    ChangeLane("ExitFromHighway", RIGHT, hw, costs,
                               highway=True, target_highway=False),
                ],
                hysteresis_margin=margin,
                interruptible=config.highway_interruptible,
            )
        )
    options.append(SafeStop(params=params, costs=costs))

    root = Arbitrator.priority("AutomatedDriving", options)
    graph = ArbitrationGraph(root)
    blocks = {
        name: node
        for name, node in graph.nodes.items()
        if not isinstance(node, Arbitrator)
    }
    return GraphBundle(graph, config, blocks, monitor)
