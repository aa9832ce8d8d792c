import math

import pytest

from drivearb.scenario import (
    BAD_TYPE,
    BAD_VALUE,
    DANGLING_REFERENCE,
    MISSING_FIELD,
    SCENARIO_DIR_VAR,
    UNKNOWN_KEY,
    VERSION_MISMATCH,
    ScenarioFormatError,
    bundled_scenarios,
    emit_scenario,
    load_bundled,
    parse_scenario_text,
    resolve_scenario,
)
from drivearb.units import kmh_to_ms

MINIMAL = """\
format_version: 1
name: mini
map:
  lanes:
    - id: A
      centerline: [[0.0, 0.0], [200.0, 0.0]]
      width_m: 3.5
      speed_limit_kmh: 50.0
route:
  lanes: [A]
  goal_pose: [195.0, 0.0, 0.0]
ego:
  pose: [5.0, 0.0, 0.0]
  speed_kmh: 30.0
"""


def errors_of(text):
    with pytest.raises(ScenarioFormatError) as excinfo:
        parse_scenario_text(text)
    return excinfo.value.errors


def line_of(text, needle):
    for i, row in enumerate(text.splitlines(), start=1):
        if needle in row:
            return i
    raise AssertionError(f"{needle!r} not found")


# --------------------------------------------------------------- parsing


def test_minimal_scenario_parses():
    scn = parse_scenario_text(MINIMAL)
    assert scn.name == "mini"
    assert list(scn.world_map.lanes) == ["A"]
    assert scn.route.lane_ids == ["A"]
    assert scn.ego.speed == pytest.approx(kmh_to_ms(30.0))
    assert scn.agents == []
    assert scn.sim.dt == 0.1 and scn.sim.seed == 0
    assert scn.graph.urban and scn.graph.safe_stop


def test_units_are_converted():
    text = MINIMAL + """\
agents:
  - id: lead
    pose: [60.0, 0.0, 90.0]
    speed_kmh: 36.0
    schedule: [[2.0, 18.0]]
graph:
  urban_margin_kmh: 2.0
"""
    scn = parse_scenario_text(text)
    lane = scn.world_map.lanes["A"]
    assert lane.speed_limit == pytest.approx(kmh_to_ms(50.0))
    agent = scn.agents[0]
    assert agent.obj.speed == pytest.approx(10.0)
    assert agent.obj.pose.heading == pytest.approx(math.pi / 2)
    assert agent.schedule == ((2.0, pytest.approx(5.0)),)
    assert scn.graph.urban_margin == pytest.approx(kmh_to_ms(2.0))


def test_param_overrides_reach_graph_config():
    text = MINIMAL + """\
behavior_params:
  d_max_lane_change: 60.0
cost_params:
  hysteresis_margin: 0.5
"""
    scn = parse_scenario_text(text)
    assert scn.graph.params.d_max_lane_change == 60.0
    assert scn.graph.costs.hysteresis_margin == 0.5
    # untouched fields keep their defaults
    assert scn.graph.params.d_min_ahead == 10.0
    assert scn.raw["behavior_params"] == {"d_max_lane_change": 60.0}


def test_bundled_scenarios_all_parse():
    names = bundled_scenarios()
    assert "point_e.scn" in names
    assert len(names) >= 5
    for name in names:
        scn = load_bundled(name)
        assert scn.world_map.lanes
        assert scn.route.lane_ids
        bundle = scn.build_bundle()
        assert bundle.root is not None


def test_bundled_point_e_shape():
    scn = load_bundled("point_e")  # suffix optional
    assert len(scn.world_map.lanes) == 7
    assert scn.route.lane_ids[0] == "UL1"
    assert scn.route.lane_ids[-1] == "TA"
    assert scn.ego.speed == pytest.approx(kmh_to_ms(30.0))


def test_roundtrip_is_a_fixed_point():
    for name in bundled_scenarios():
        first = load_bundled(name)
        second = parse_scenario_text(emit_scenario(first))
        assert second.raw == first.raw, name
        assert emit_scenario(second) == emit_scenario(first)


# ---------------------------------------------------------------- errors


def test_version_mismatch():
    text = MINIMAL.replace("format_version: 1", "format_version: 2")
    errs = errors_of(text)
    assert [e.code for e in errs] == [VERSION_MISMATCH]
    assert errs[0].line == 1


def test_missing_version():
    text = MINIMAL.replace("format_version: 1\n", "")
    errs = errors_of(text)
    assert [e.code for e in errs] == [MISSING_FIELD]
    assert "format_version" in errs[0].message


def test_not_yaml_at_all():
    errs = errors_of("map: [unclosed")
    assert errs[0].code == BAD_VALUE
    assert "YAML" in errs[0].message


def test_document_must_be_a_mapping():
    errs = errors_of("- 1\n- 2\n")
    assert errs[0].code == BAD_TYPE


def test_unknown_param_key_is_reported_with_line():
    text = MINIMAL + """\
behavior_params:
  ttcMinAhed: 4.0
"""
    errs = errors_of(text)
    assert len(errs) == 1
    err = errs[0]
    assert err.code == UNKNOWN_KEY
    assert "ttcMinAhed" in err.message
    assert err.line == line_of(text, "ttcMinAhed")
    assert str(err) == f"UnknownKey: behavior_params: unknown key 'ttcMinAhed' (line {err.line})"


def test_unknown_top_level_key():
    errs = errors_of(MINIMAL + "extra_section: {}\n")
    assert [e.code for e in errs] == [UNKNOWN_KEY]
    assert "extra_section" in errs[0].message


def test_route_with_absent_lane():
    text = MINIMAL.replace("lanes: [A]", "lanes: [A, Z]")
    errs = errors_of(text)
    assert [e.code for e in errs] == [DANGLING_REFERENCE]
    assert "'Z'" in errs[0].message
    assert errs[0].line == line_of(text, "lanes: [A, Z]") - 1  # section line


def test_dangling_successor():
    text = MINIMAL.replace("speed_limit_kmh: 50.0", "speed_limit_kmh: 50.0\n      successors: [B9]")
    errs = errors_of(text)
    assert [e.code for e in errs] == [DANGLING_REFERENCE]
    assert "B9" in errs[0].message


def test_missing_ego_section():
    text = MINIMAL.split("ego:")[0]
    errs = errors_of(text)
    assert [e.code for e in errs] == [MISSING_FIELD]
    assert "'ego'" in errs[0].message


def test_bad_pose_type():
    text = MINIMAL.replace("pose: [5.0, 0.0, 0.0]", "pose: [5.0, oops, 0.0]")
    errs = errors_of(text)
    assert [e.code for e in errs] == [BAD_TYPE]
    assert "ego.pose" in errs[0].message


def test_duplicate_lane_id():
    extra = """\
    - id: A
      centerline: [[0.0, -3.5], [200.0, -3.5]]
      width_m: 3.5
      speed_limit_kmh: 50.0
"""
    text = MINIMAL.replace("route:", extra + "route:")
    errs = errors_of(text)
    assert [e.code for e in errs] == [BAD_VALUE]
    assert "duplicate lane id" in errs[0].message


def test_safe_stop_cannot_be_disabled():
    errs = errors_of(MINIMAL + "graph:\n  safe_stop: false\n")
    assert [e.code for e in errs] == [BAD_VALUE]
    assert "safe stop" in errs[0].message


def test_bad_sim_step():
    errs = errors_of(MINIMAL + "sim:\n  dt_s: 0.0\n")
    assert [e.code for e in errs] == [BAD_VALUE]


def test_all_errors_are_collected_in_one_pass():
    text = MINIMAL.replace("lanes: [A]", "lanes: [A, Z]")
    text += "behavior_params:\n  ttcMinAhed: 4.0\nsim:\n  dt_s: -1\n"
    errs = errors_of(text)
    codes = sorted(e.code for e in errs)
    assert codes == [BAD_VALUE, DANGLING_REFERENCE, UNKNOWN_KEY]


# ------------------------------------------------------------- resolving


def test_resolve_literal_path(tmp_path):
    path = tmp_path / "mine.scn"
    path.write_text(MINIMAL)
    assert resolve_scenario(str(path)).name == "mini"


def test_resolve_env_directory(monkeypatch, tmp_path):
    override = MINIMAL.replace("name: mini", "name: override")
    (tmp_path / "point_e.scn").write_text(override)
    monkeypatch.setenv(SCENARIO_DIR_VAR, str(tmp_path))
    assert resolve_scenario("point_e.scn").name == "override"
    monkeypatch.delenv(SCENARIO_DIR_VAR)
    assert resolve_scenario("point_e.scn").name == "point-e exit"


def test_resolve_bundled_by_name():
    assert resolve_scenario("straight_road").name == resolve_scenario("straight_road.scn").name


def test_resolve_unknown_name():
    with pytest.raises(FileNotFoundError):
        resolve_scenario("no_such_scenario")
