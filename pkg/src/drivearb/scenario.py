"""Scenario files: a small YAML dialect describing one closed-loop run.

A scenario bundles the lane map, the route, the ego start state,
scripted agents, parameter overrides and the graph configuration.
Parsing is strict: unknown keys, dangling ids and type mismatches are
collected as coded errors with line context instead of being ignored.

File conventions: speeds are km/h (`*_kmh`), headings are degrees,
distances are meters. Parameter override sections use the library's
field names and SI units verbatim.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from importlib import resources

import yaml

from .assembly import GraphConfig, build_automated_driving_graph
from .behaviors import BehaviorParams, CostParams
from .geometry import Pose
from .simulator import Agent, SimConfig
from .units import kmh_to_ms
from .world import (
    EgoState,
    Lane,
    LaneGraphMap,
    ParkingSpot,
    Route,
    TrackedObject,
    validate_map,
)

FORMAT_VERSION = 1
SCENARIO_DIR_VAR = "DRIVEARB_SCENARIO_DIR"

VERSION_MISMATCH = "VersionMismatch"
MISSING_FIELD = "MissingField"
UNKNOWN_KEY = "UnknownKey"
DANGLING_REFERENCE = "DanglingReference"
BAD_VALUE = "BadValue"
BAD_TYPE = "BadType"

_GRAPH_FLAGS = (
    "urban",
    "highway",
    "parking",
    "emergency",
    "intersection",
    "merge_sequences",
    "safe_stop",
    "urban_interruptible",
    "highway_interruptible",
)
_GRAPH_MARGINS = ("urban_margin_kmh", "highway_margin_kmh", "emergency_margin_kmh")


@dataclass(frozen=True)
class ScenarioError:
    code: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f" (line {self.line})" if self.line is not None else ""
        return f"{self.code}: {self.message}{where}"


class ScenarioFormatError(ValueError):
    """One or more schema errors in a scenario file."""

    def __init__(self, errors: list[ScenarioError]):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


@dataclass(eq=False)
class ScenarioFile:
    """A parsed, validated scenario, ready to run."""

    name: str
    world_map: LaneGraphMap
    route: Route
    ego: EgoState
    agents: list[Agent]
    sim: SimConfig
    graph: GraphConfig
    raw: dict  # normalized document; emit_scenario writes this back out

    def build_bundle(self):
        return build_automated_driving_graph(self.graph)


def _key_lines(text: str) -> dict[tuple, int]:
    """Map each document path (tuple of keys / indices) to its line."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[tuple, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                sub = path + (getattr(key_node, "value", None),)
                lines[sub] = key_node.start_mark.line + 1
                walk(value_node, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                sub = path + (i,)
                lines[sub] = item.start_mark.line + 1
                walk(item, sub)

    if root is not None:
        walk(root, ())
    return lines


def _label(path: tuple) -> str:
    return ".".join(str(p) for p in path) if path else "document"


class _Parser:
    def __init__(self, text: str):
        self.errors: list[ScenarioError] = []
        self.lines = _key_lines(text)

    def fail(self, code: str, message: str, path: tuple = ()) -> None:
        self.errors.append(ScenarioError(code, message, self.lines.get(path)))

    # typed getters; every one records an error and returns the default
    # instead of raising, so one pass collects everything

    def get(self, mapping, path, key, required=False, default=None):
        if key not in mapping:
            if required:
                self.fail(MISSING_FIELD, f"{_label(path)}: missing key {key!r}", path)
            return default
        return mapping[key]

    def num(self, mapping, path, key, required=False, default=None, minimum=None):
        value = self.get(mapping, path, key, required, default)
        sub = path + (key,)
        if key not in mapping:
            return default
        if value is None:  # an explicit null reads as "not set"
            if required:
                self.fail(BAD_TYPE, f"{_label(sub)}: expected a number", sub)
            return default
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(BAD_TYPE, f"{_label(sub)}: expected a number", sub)
            return default
        if minimum is not None and value < minimum:
            self.fail(BAD_VALUE, f"{_label(sub)}: must be >= {minimum}", sub)
            return default
        return float(value)

    def integer(self, mapping, path, key, default):
        value = self.get(mapping, path, key, False, default)
        sub = path + (key,)
        if key not in mapping or value is None:
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(BAD_TYPE, f"{_label(sub)}: expected an integer", sub)
            return default
        return value

    def text(self, mapping, path, key, required=False, default=None):
        value = self.get(mapping, path, key, required, default)
        sub = path + (key,)
        if key not in mapping:
            return default
        if value is None:
            if required:
                self.fail(BAD_TYPE, f"{_label(sub)}: expected a string", sub)
            return default
        if not isinstance(value, str):
            self.fail(BAD_TYPE, f"{_label(sub)}: expected a string", sub)
            return default
        return value

    def boolean(self, mapping, path, key, default):
        value = self.get(mapping, path, key, False, default)
        sub = path + (key,)
        if key not in mapping or value is None:
            return default
        if not isinstance(value, bool):
            self.fail(BAD_TYPE, f"{_label(sub)}: expected true or false", sub)
            return default
        return value

    def mapping(self, parent, path, key, required=False):
        value = self.get(parent, path, key, required, None)
        sub = path + (key,)
        if value is None:
            return None
        if not isinstance(value, dict):
            self.fail(BAD_TYPE, f"{_label(sub)}: expected a mapping", sub)
            return None
        return value

    def sequence(self, parent, path, key, required=False):
        value = self.get(parent, path, key, required, None)
        sub = path + (key,)
        if value is None:
            return None
        if not isinstance(value, list):
            self.fail(BAD_TYPE, f"{_label(sub)}: expected a list", sub)
            return None
        return value

    def reject_unknown(self, mapping, path, known) -> None:
        for key in mapping:
            if key not in known:
                sub = path + (key,)
                self.fail(UNKNOWN_KEY, f"{_label(path)}: unknown key {key!r}", sub)

    def pose(self, mapping, path, key, required=False):
        """[x_m, y_m, heading_deg] -> Pose with heading in radians."""
        value = self.get(mapping, path, key, required, None)
        sub = path + (key,)
        if value is None:
            return None
        if (
            not isinstance(value, list)
            or len(value) != 3
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
        ):
            self.fail(BAD_TYPE, f"{_label(sub)}: expected [x, y, heading_deg]", sub)
            return None
        return Pose(float(value[0]), float(value[1]), math.radians(float(value[2])))

    def centerline(self, mapping, path, key):
        value = self.sequence(mapping, path, key, required=True)
        sub = path + (key,)
        if value is None:
            return None
        ok = len(value) >= 2 and all(
            isinstance(p, list)
            and len(p) == 2
            and all(not isinstance(v, bool) and isinstance(v, (int, float)) for v in p)
            for p in value
        )
        if not ok:
            self.fail(BAD_TYPE, f"{_label(sub)}: expected at least two [x, y] points", sub)
            return None
        return [[float(p[0]), float(p[1])] for p in value]


def _norm_pose(pose: Pose) -> list[float]:
    return [pose.x, pose.y, math.degrees(pose.heading)]


def _compact(mapping: dict) -> dict:
    """Drop unset optional keys so emitted files carry no nulls."""
    return {k: v for k, v in mapping.items() if v is not None}


def _parse_params(parser, data, key, cls):
    """Parameter overrides keyed by the dataclass field names."""
    known = {f.name for f in fields(cls)}
    path = (key,)
    section = parser.mapping(data, (), key)
    overrides = {}
    if section is not None:
        parser.reject_unknown(section, path, known)
        for name in section:
            if name not in known:
                continue
            value = parser.num(section, path, name)
            if value is not None:
                overrides[name] = value
    try:
        built = cls(**overrides)
        built.validate()
    except (TypeError, ValueError) as exc:
        parser.fail(BAD_VALUE, f"{key}: {exc}", path)
        built = cls()
    return built, overrides


def parse_scenario_text(text: str) -> ScenarioFile:
    """Parse and validate a scenario document.

    Raises ScenarioFormatError carrying every detected schema error.
    """
    parser = _Parser(text)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ScenarioFormatError(
            [ScenarioError(BAD_VALUE, f"not valid YAML: {exc}", line)]
        ) from exc
    if not isinstance(data, dict):
        raise ScenarioFormatError(
            [ScenarioError(BAD_TYPE, "document: expected a mapping")]
        )

    version = data.get("format_version")
    if version is None:
        raise ScenarioFormatError(
            [ScenarioError(MISSING_FIELD, "document: missing key 'format_version'")]
        )
    if version != FORMAT_VERSION:
        raise ScenarioFormatError(
            [
                ScenarioError(
                    VERSION_MISMATCH,
                    f"format_version {version!r} is not supported (expected {FORMAT_VERSION})",
                    parser.lines.get(("format_version",)),
                )
            ]
        )

    parser.reject_unknown(
        data,
        (),
        {
            "format_version",
            "name",
            "map",
            "route",
            "ego",
            "agents",
            "behavior_params",
            "cost_params",
            "sim",
            "graph",
        },
    )
    name = parser.text(data, (), "name", required=True, default="unnamed")

    # -- map ---------------------------------------------------------
    lanes: dict[str, Lane] = {}
    spots: dict[str, ParkingSpot] = {}
    raw_lanes: list[dict] = []
    raw_spots: list[dict] = []
    map_section = parser.mapping(data, (), "map", required=True)
    if map_section is not None:
        map_path = ("map",)
        parser.reject_unknown(map_section, map_path, {"lanes", "parking_spots"})
        lane_list = parser.sequence(map_section, map_path, "lanes", required=True) or []
        for i, entry in enumerate(lane_list):
            path = map_path + ("lanes", i)
            if not isinstance(entry, dict):
                parser.fail(BAD_TYPE, f"{_label(path)}: expected a mapping", path)
                continue
            parser.reject_unknown(
                entry,
                path,
                {
                    "id",
                    "centerline",
                    "width_m",
                    "speed_limit_kmh",
                    "successors",
                    "adjacent_left",
                    "adjacent_right",
                    "left_reachable",
                    "right_reachable",
                    "intersection_arm",
                    "highway",
                },
            )
            lane_id = parser.text(entry, path, "id", required=True)
            line = parser.centerline(entry, path, "centerline")
            width = parser.num(entry, path, "width_m", required=True, minimum=0.1)
            limit = parser.num(entry, path, "speed_limit_kmh", required=True, minimum=0.1)
            successors = parser.sequence(entry, path, "successors") or []
            if not all(isinstance(s, str) for s in successors):
                parser.fail(BAD_TYPE, f"{_label(path)}: successors must be lane ids", path)
                successors = [s for s in successors if isinstance(s, str)]
            record = {
                "id": lane_id,
                "centerline": line,
                "width_m": width,
                "speed_limit_kmh": limit,
                "successors": [str(s) for s in successors],
                "adjacent_left": parser.text(entry, path, "adjacent_left"),
                "adjacent_right": parser.text(entry, path, "adjacent_right"),
                "left_reachable": parser.boolean(entry, path, "left_reachable", False),
                "right_reachable": parser.boolean(entry, path, "right_reachable", False),
                "intersection_arm": parser.boolean(entry, path, "intersection_arm", False),
                "highway": parser.boolean(entry, path, "highway", False),
            }
            if lane_id is None or line is None or width is None or limit is None:
                continue
            if lane_id in lanes:
                parser.fail(BAD_VALUE, f"duplicate lane id {lane_id!r}", path)
                continue
            raw_lanes.append(_compact(record))
            lanes[lane_id] = Lane(
                lane_id,
                line,
                width,
                kmh_to_ms(limit),
                successors=record["successors"],
                adjacent_left=record["adjacent_left"],
                adjacent_right=record["adjacent_right"],
                left_reachable=record["left_reachable"],
                right_reachable=record["right_reachable"],
                intersection_arm=record["intersection_arm"],
                highway=record["highway"],
            )
        spot_list = parser.sequence(map_section, map_path, "parking_spots") or []
        for i, entry in enumerate(spot_list):
            path = map_path + ("parking_spots", i)
            if not isinstance(entry, dict):
                parser.fail(BAD_TYPE, f"{_label(path)}: expected a mapping", path)
                continue
            parser.reject_unknown(entry, path, {"id", "pose", "entry_lane"})
            spot_id = parser.text(entry, path, "id", required=True)
            pose = parser.pose(entry, path, "pose", required=True)
            entry_lane = parser.text(entry, path, "entry_lane")
            if spot_id is None or pose is None:
                continue
            if spot_id in spots:
                parser.fail(BAD_VALUE, f"duplicate spot id {spot_id!r}", path)
                continue
            raw_spots.append(
                _compact({"id": spot_id, "pose": _norm_pose(pose), "entry_lane": entry_lane})
            )
            spots[spot_id] = ParkingSpot(spot_id, pose, entry_lane=entry_lane)

    # cross references inside the map
    for i, record in enumerate(raw_lanes):
        path = ("map", "lanes", i)
        for succ in record["successors"]:
            if succ not in lanes:
                parser.fail(
                    DANGLING_REFERENCE,
                    f"lane {record['id']!r}: unknown successor {succ!r}",
                    path,
                )
        for side in ("adjacent_left", "adjacent_right"):
            nbr = record.get(side)
            if nbr is not None and nbr not in lanes:
                parser.fail(
                    DANGLING_REFERENCE,
                    f"lane {record['id']!r}: unknown neighbor {nbr!r}",
                    path,
                )
    for i, record in enumerate(raw_spots):
        if record.get("entry_lane") is not None and record.get("entry_lane") not in lanes:
            parser.fail(
                DANGLING_REFERENCE,
                f"spot {record['id']!r}: unknown entry lane {record['entry_lane']!r}",
                ("map", "parking_spots", i),
            )

    world_map = LaneGraphMap(lanes, spots)
    if not parser.errors:
        for problem in validate_map(world_map):
            parser.fail(BAD_VALUE, problem, ("map",))

    # -- route -------------------------------------------------------
    route = None
    raw_route: dict = {}
    route_section = parser.mapping(data, (), "route", required=True)
    if route_section is not None:
        path = ("route",)
        parser.reject_unknown(route_section, path, {"lanes", "goal_pose", "goal_spot"})
        route_lanes = parser.sequence(route_section, path, "lanes", required=True) or []
        goal_pose = parser.pose(route_section, path, "goal_pose", required=True)
        goal_spot = parser.text(route_section, path, "goal_spot")
        for lane_id in route_lanes:
            if lane_id not in lanes:
                parser.fail(
                    DANGLING_REFERENCE, f"route: unknown lane {lane_id!r}", path
                )
        if not route_lanes:
            parser.fail(BAD_VALUE, "route: needs at least one lane", path)
        if goal_spot is not None and goal_spot not in spots:
            parser.fail(
                DANGLING_REFERENCE, f"route: unknown parking spot {goal_spot!r}", path
            )
        if goal_pose is not None and route_lanes:
            raw_route = _compact(
                {
                    "lanes": [str(l) for l in route_lanes],
                    "goal_pose": _norm_pose(goal_pose),
                    "goal_spot": goal_spot,
                }
            )
            route = Route(raw_route["lanes"], goal_pose, goal_spot=goal_spot)

    # -- ego -----------------------------------------------------------
    ego = None
    raw_ego: dict = {}
    ego_section = parser.mapping(data, (), "ego", required=True)
    if ego_section is not None:
        path = ("ego",)
        parser.reject_unknown(ego_section, path, {"pose", "speed_kmh", "length_m", "width_m"})
        pose = parser.pose(ego_section, path, "pose", required=True)
        speed = parser.num(ego_section, path, "speed_kmh", required=True, minimum=0.0)
        length = parser.num(ego_section, path, "length_m", default=4.5, minimum=0.1)
        width = parser.num(ego_section, path, "width_m", default=1.8, minimum=0.1)
        if pose is not None and speed is not None:
            raw_ego = {
                "pose": _norm_pose(pose),
                "speed_kmh": speed,
                "length_m": length,
                "width_m": width,
            }
            ego = EgoState(pose, kmh_to_ms(speed), length, width)

    # -- agents --------------------------------------------------------
    agents: list[Agent] = []
    raw_agents: list[dict] = []
    seen_agent_ids: set[str] = set()
    agent_list = parser.sequence(data, (), "agents") or []
    for i, entry in enumerate(agent_list):
        path = ("agents", i)
        if not isinstance(entry, dict):
            parser.fail(BAD_TYPE, f"{_label(path)}: expected a mapping", path)
            continue
        parser.reject_unknown(
            entry, path, {"id", "pose", "speed_kmh", "length_m", "width_m", "schedule"}
        )
        agent_id = parser.text(entry, path, "id", required=True)
        pose = parser.pose(entry, path, "pose", required=True)
        speed = parser.num(entry, path, "speed_kmh", required=True, minimum=0.0)
        length = parser.num(entry, path, "length_m", default=4.5, minimum=0.1)
        width = parser.num(entry, path, "width_m", default=1.8, minimum=0.1)
        schedule_raw = parser.sequence(entry, path, "schedule") or []
        schedule: list[tuple[float, float]] = []
        for item in schedule_raw:
            if (
                not isinstance(item, list)
                or len(item) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in item)
            ):
                parser.fail(
                    BAD_TYPE,
                    f"{_label(path)}: schedule entries are [time_s, speed_kmh]",
                    path + ("schedule",),
                )
                continue
            schedule.append((float(item[0]), float(item[1])))
        if agent_id is None or pose is None or speed is None:
            continue
        if agent_id in seen_agent_ids:
            parser.fail(BAD_VALUE, f"duplicate agent id {agent_id!r}", path)
            continue
        seen_agent_ids.add(agent_id)
        raw_agents.append(
            {
                "id": agent_id,
                "pose": _norm_pose(pose),
                "speed_kmh": speed,
                "length_m": length,
                "width_m": width,
                "schedule": [[t, v] for t, v in schedule],
            }
        )
        agents.append(
            Agent(
                TrackedObject(agent_id, pose, kmh_to_ms(speed), length, width),
                schedule=tuple((t, kmh_to_ms(v)) for t, v in schedule),
            )
        )

    # -- parameters ------------------------------------------------------
    params, raw_bp = _parse_params(parser, data, "behavior_params", BehaviorParams)
    costs, raw_cp = _parse_params(parser, data, "cost_params", CostParams)

    # -- sim -------------------------------------------------------------
    sim_section = parser.mapping(data, (), "sim") or {}
    sim_path = ("sim",)
    parser.reject_unknown(sim_section, sim_path, {"dt_s", "max_duration_s", "seed"})
    dt = parser.num(sim_section, sim_path, "dt_s", default=0.1)
    duration = parser.num(sim_section, sim_path, "max_duration_s", default=60.0)
    seed = parser.integer(sim_section, sim_path, "seed", default=0)
    sim = SimConfig(dt=dt, max_duration=duration, seed=seed)
    try:
        sim.validate()
    except ValueError as exc:
        parser.fail(BAD_VALUE, f"sim: {exc}", sim_path)
        sim = SimConfig()

    # -- graph -----------------------------------------------------------
    graph_section = parser.mapping(data, (), "graph") or {}
    graph_path = ("graph",)
    parser.reject_unknown(graph_section, graph_path, set(_GRAPH_FLAGS) | set(_GRAPH_MARGINS))
    flags = {
        flag: parser.boolean(graph_section, graph_path, flag, True)
        for flag in _GRAPH_FLAGS
    }
    margins_kmh = {
        key: parser.num(graph_section, graph_path, key, minimum=0.0)
        for key in _GRAPH_MARGINS
    }
    graph_kwargs = dict(flags)
    for key, value in margins_kmh.items():
        if value is not None:
            graph_kwargs[key.removesuffix("_kmh")] = kmh_to_ms(value)
    graph = GraphConfig(params=params, costs=costs, **graph_kwargs)
    try:
        graph.validate()
    except ValueError as exc:
        parser.fail(BAD_VALUE, f"graph: {exc}", graph_path)

    if parser.errors:
        raise ScenarioFormatError(parser.errors)

    raw = {
        "format_version": FORMAT_VERSION,
        "name": name,
        "map": {"lanes": raw_lanes, "parking_spots": raw_spots},
        "route": raw_route,
        "ego": raw_ego,
        "agents": raw_agents,
        "behavior_params": raw_bp,
        "cost_params": raw_cp,
        "sim": {"dt_s": dt, "max_duration_s": duration, "seed": seed},
        "graph": {
            **flags,
            **{k: v for k, v in margins_kmh.items() if v is not None},
        },
    }
    return ScenarioFile(name, world_map, route, ego, agents, sim, graph, raw)


def emit_scenario(scenario: ScenarioFile) -> str:
    """Serialize back to text; parse(emit(parse(f))) == parse(f)."""
    return yaml.safe_dump(scenario.raw, sort_keys=False, default_flow_style=None)


def parse_scenario(path: str) -> ScenarioFile:
    with open(path, encoding="utf-8") as handle:
        return parse_scenario_text(handle.read())


def bundled_scenarios() -> list[str]:
    """Names of the scenario files shipped with the package."""
    root = resources.files(__package__) / "scenarios"
    return sorted(
        entry.name for entry in root.iterdir() if entry.name.endswith(".scn")
    )


def load_bundled(name: str) -> ScenarioFile:
    if not name.endswith(".scn"):
        name += ".scn"
    root = resources.files(__package__) / "scenarios"
    return parse_scenario_text((root / name).read_text(encoding="utf-8"))


def resolve_scenario(name: str) -> ScenarioFile:
    """Find a scenario by path, by name in the override directory, or bundled."""
    if os.path.exists(name):
        return parse_scenario(name)
    override = os.environ.get(SCENARIO_DIR_VAR)
    if override:
        candidate = os.path.join(override, name)
        if os.path.exists(candidate):
            return parse_scenario(candidate)
    base = name if name.endswith(".scn") else name + ".scn"
    if base in bundled_scenarios():
        return load_bundled(base)
    raise FileNotFoundError(f"no scenario named {name!r}")
