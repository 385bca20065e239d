"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

from __future__ import annotations

import itertools
import math
import time
from collections import Counter

import pytest

from selflets.prediction import FrequencyThresholds, SpaceSavingSketch, frequent_items
from selflets.simulator import builtin_scenario, export_metrics, goal_request_costs, run

from .oracles import exact_frequent, random_streams

RESULTS: list[str] = []

THRESHOLD_PAIRS = [(1, 0.01), (5, 0.5), (3, 0.1), (10, 0.25), (50, 0.05), (1, 1.0)]


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def policy_on():
    trace: list = []
    rep, secs = timed(run, builtin_scenario(), trace)
    return rep, trace, secs


@pytest.fixture(scope="module")
def policy_off():
    rep, secs = timed(run, builtin_scenario().with_overrides(policy=False))
    return rep, secs


@pytest.fixture(scope="module")
def streams():
    return list(random_streams(200))


def test_criterion_1_convergence(policy_on):
    rep, _, secs = policy_on
    sc = builtin_scenario()
    assert sc.duration == 2000 and sc.generators[0].period == 2 and sc.counting_mode.value == "requests_only"
    final = rep.series[-1]["messages_total"]
    flat_from = max(t for t in range(len(rep.series))
                    if t == 0 or rep.series[t - 1]["messages_total"] != final)
    flat_share = (rep.duration + 1 - flat_from) / (rep.duration + 1)
    learned = {"service1", "service2", "service3"} <= set(rep.nodes["S1"]["behaviors"])
    ok = (rep.convergence_tick is not None and flat_share >= 0.5 and learned and secs < 5
          and not rep.stalled)
    report(1, "convergence with policy on", ok,
           f"messages={rep.total_messages} convergence_tick={rep.convergence_tick} "
           f"flat_share={flat_share:.3f} S1_behaviors={rep.nodes['S1']['behaviors']} runtime={secs:.2f}s")


def test_criterion_2_linear_growth(policy_off):
    rep, secs = policy_off
    mismatches = [row["tick"] for row in rep.series if row["messages_total"] != row["goals"]["S1"]]
    ok = not mismatches and rep.total_messages == rep.duration // 2 and secs < 5
    report(2, "linear growth with policy off", ok,
           f"messages={rep.total_messages} S1_goals={rep.goals('S1')} "
           f"mismatched_ticks={len(mismatches)} runtime={secs:.2f}s")


def test_criterion_3_crossover(policy_on, policy_off):
    on, off = policy_on[0], policy_off[0]
    above = [r1["tick"] for r1, r2 in zip(on.series, off.series) if r1["messages_total"] > r2["messages_total"]]
    final_below = on.series[-1]["messages_total"] < off.series[-1]["messages_total"]
    ok = bool(above) and final_below
    report(3, "crossover", ok,
           f"on>off first at tick {above[0] if above else None}; final on={on.total_messages} "
           f"off={off.total_messages}")


def test_criterion_4_cost_profile(policy_on):
    _, trace, _ = policy_on
    costs = [c for _, _, c in goal_request_costs(trace, "S1")]
    stages = [k for k, _ in itertools.groupby(costs)]
    ok = stages == [1, 2, 0]
    runs = [(k, len(list(g))) for k, g in itertools.groupby(costs)]
    report(4, "three-stage per-goal cost", ok, f"(cost, goals) runs={runs}")


def test_criterion_5_oracle_equivalence(streams):
    start = time.perf_counter()
    violations = 0
    exact_checks = 0
    for stream, m, alphabet in streams:
        truth = Counter(stream)
        n = len(stream)
        for cap in sorted({m, max(m, alphabet)}):
            s = SpaceSavingSketch(cap)
            for x in stream:
                s.observe(x)
            for c in s.counters():
                if not (c.count - c.error <= truth[c.item] <= c.count) or c.error > math.ceil(n / cap):
                    violations += 1
            if cap >= alphabet:
                for occ, th in THRESHOLD_PAIRS:
                    exact_checks += 1
                    if frequent_items(s, FrequencyThresholds(occ, th)) != exact_frequent(stream, occ, th):
                        violations += 1
    secs = time.perf_counter() - start
    report(5, "space-saving oracle equivalence", violations == 0 and secs < 30,
           f"streams={len(streams)} exact_comparisons={exact_checks} violations={violations} "
           f"runtime={secs:.2f}s")


def test_criterion_6_no_false_positives(streams):
    violations = reported = 0
    for stream, m, _ in streams:
        truth = Counter(stream)
        n = len(stream)
        s = SpaceSavingSketch(m)
        for x in stream:
            s.observe(x)
        for occ, th in THRESHOLD_PAIRS:
            for item, _, _ in frequent_items(s, FrequencyThresholds(occ, th)):
                reported += 1
                if truth[item] < occ or truth[item] / n < th:
                    violations += 1
    report(6, "no false positives", violations == 0,
           f"reported_items={reported} violations={violations}")


def test_criterion_7_determinism(tmp_path):
    variants = [builtin_scenario().with_overrides(duration=400, seed=s, policy=p)
                for s in (0, 42) for p in (True, False)]
    identical = 0
    for i, sc in enumerate(variants):
        blobs = []
        for attempt in range(2):
            path = tmp_path / f"run{i}_{attempt}.json"
            export_metrics(run(sc), "json", path)
            blobs.append(path.read_bytes())
        identical += blobs[0] == blobs[1]
    report(7, "determinism", identical == len(variants),
           f"byte-identical pairs={identical}/{len(variants)}")


def test_criterion_8_single_fire(policy_on):
    rep, _, _ = policy_on
    applied = rep.nodes["S1"]["rules"]["applied"]
    teach = [a for a in applied if a.startswith("change_ask_mode(") and a.endswith(", teach)")]
    per_service = Counter(teach)
    ok = len(teach) == 3 and all(v == 1 for v in per_service.values())
    report(8, "policy fires once per service", ok, f"applied={teach}")
