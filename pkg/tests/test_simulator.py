from __future__ import annotations

import copy
import json

import pytest

from selflets.simulator import (
    MetricsReport,
    ScenarioError,
    builtin_scenario,
    export_metrics,
    goal_request_costs,
    load_scenario,
    resolve_scenario_path,
    run,
    scenario_from_dict,
)


@pytest.fixture(scope="module")
def raw():
    return json.loads(resolve_scenario_path("teach_propagation").read_text())


def test_builtin_scenario_shape():
    sc = load_scenario("teach_propagation.json")
    assert sorted(n.id for n in sc.nodes) == ["S1", "S2"]
    assert sorted(s.id for s in sc.node("S2").services) == ["Service 1", "Service 2", "Service 3"]
    assert sc.duration == 2000 and sc.generators[0].period == 2


def test_unknown_behavior_is_named(raw):
    data = copy.deepcopy(raw)
    s2 = next(n for n in data["nodes"] if n["id"] == "S2")
    s2["services"][0]["behavior"] = "ghost"
    with pytest.raises(ScenarioError, match="ghost"):
        scenario_from_dict(data)


def test_empty_node_list(raw):
    data = copy.deepcopy(raw)
    data["nodes"] = []
    with pytest.raises(ScenarioError, match="node list is empty"):
        scenario_from_dict(data)


def test_generator_for_unoffered_service(raw):
    data = copy.deepcopy(raw)
    data["generators"][0]["service"] = "Service 9"
    with pytest.raises(ScenarioError):
        scenario_from_dict(data)


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_scenario_dict_roundtrip():
    sc = builtin_scenario()
    assert scenario_from_dict(sc.to_dict()).to_dict() == sc.to_dict()


def test_duration_zero():
    report = run(builtin_scenario().with_overrides(duration=0))
    assert report.total_messages == 0
    assert report.goals("S1") == 0
    assert len(report.series) == 1


def test_policy_off_linear():
    report = run(builtin_scenario().with_overrides(duration=100, policy=False))
    assert report.total_messages == 50 == report.goals("S1")
    assert all(row["messages_total"] == row["goals"]["S1"] for row in report.series)


def test_policy_on_plateau():
    report = run(builtin_scenario().with_overrides(duration=200))
    assert report.convergence_tick is not None
    assert report.total_messages == report.messages_at(report.convergence_tick)
    assert {"service1", "service2", "service3"} <= set(report.nodes["S1"]["behaviors"])
    assert not report.stalled


def test_export_json_roundtrip(tmp_path):
    report = run(builtin_scenario().with_overrides(duration=60))
    path = tmp_path / "m.json"
    export_metrics(report, "json", path)
    assert MetricsReport.from_dict(json.loads(path.read_text())) == report


def test_export_csv(tmp_path):
    report = run(builtin_scenario().with_overrides(duration=30))
    path = tmp_path / "m.csv"
    export_metrics(report, "csv", path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tick,messages_total,goals_S1,goals_S2"
    assert len(lines) == 31 + 1


def test_export_unwritable(tmp_path):
    report = run(builtin_scenario().with_overrides(duration=0))
    with pytest.raises(OSError):
        export_metrics(report, "json", tmp_path / "missing" / "m.json")


def test_same_seed_same_bytes():
    sc = builtin_scenario().with_overrides(duration=120, seed=7)
    assert run(sc).to_json() == run(sc).to_json()


def test_trace_records_goal_costs():
    trace = []
    run(builtin_scenario().with_overrides(duration=30), trace)
    costs = [c for _, _, c in goal_request_costs(trace, "S1")]
    assert costs[:5] == [1] * 5
    assert costs[-1] == 0
