"""Simulator contracts: determinism, clock drift bound, scenario validation,
and the basic network model semantics."""
import json

import pytest

from bodega.sim.harness import ClockModel, NetworkModel, Simulation, run_scenario
from bodega.sim.scenario import (
    ScenarioError,
    latency_expectation,
    scenario_from_dict,
)

SYM20 = {
    "name": "sym20",
    "nodes": 5,
    "rtt_ms": [[0 if i == j else 20 for j in range(5)] for i in range(5)],
    "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                       "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
    "workload": {"start_ms": 500, "duration_ms": 1000, "keys": 10, "write_ratio": 0.2,
                 "clients": [{"site": 0, "count": 1}, {"site": 3, "count": 1}]},
}


def test_same_seed_identical_trace():
    sc = scenario_from_dict(SYM20)
    a = run_scenario(sc, seed=11, trace=True)
    b = run_scenario(scenario_from_dict(SYM20), seed=11, trace=True)
    assert a.trace == b.trace
    assert "\n".join(a.trace) == "\n".join(b.trace)


def test_different_seed_different_trace():
    sc = scenario_from_dict(SYM20)
    a = run_scenario(sc, seed=11, trace=True)
    b = run_scenario(scenario_from_dict(SYM20), seed=12, trace=True)
    assert a.trace != b.trace


def test_trace_is_json_lines_with_timestamps():
    sc = scenario_from_dict(SYM20)
    res = run_scenario(sc, seed=3, trace=True)
    ts = []
    for line in res.trace:
        d = json.loads(line)
        assert isinstance(d["t"], int)
        ts.append(d["t"])
    assert ts == sorted(ts)


def test_clock_drift_bound_over_lease_window():
    sc = scenario_from_dict(SYM20)
    sim = Simulation(sc, seed=5)
    window = sc.drift_window_us
    for a in range(sc.n):
        for b in range(sc.n):
            for t0 in (0, 1_000_000, 7_000_000):
                da = sim.clocks[a].local(t0 + window) - sim.clocks[a].local(t0)
                db = sim.clocks[b].local(t0 + window) - sim.clocks[b].local(t0)
                assert abs(da - db) <= sc.drift_delta_us + 2  # integer rounding slack


def test_clock_monotone_and_inverse():
    c = ClockModel(skew=777, rate=0.02)
    prev = -1
    for t in range(0, 100_000, 137):
        lt = c.local(t)
        assert lt > prev
        prev = lt
        assert c.local(c.global_of(lt)) >= lt


def test_partition_blocks_and_heals():
    sc = scenario_from_dict(SYM20)
    sim = Simulation(sc, seed=1)
    net = sim.net
    assert net.delay(0, 2) is not None
    net.set_partition(((0, 1), (2, 3, 4)))
    assert net.delay(0, 2) is None
    assert net.delay(0, 1) is not None
    assert net.delay(2, 4) is not None
    assert net.client_delay(0, 2) is None
    net.set_partition(None)
    assert net.delay(0, 2) is not None


def test_scenario_validation_errors_name_field():
    bad = dict(SYM20)
    bad["nodes"] = 4
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(bad)
    assert e.value.field == "nodes"

    bad = json.loads(json.dumps(SYM20))
    bad["rtt_ms"][0][1] = 99  # asymmetric
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(bad)
    assert "rtt_ms" in e.value.field

    bad = json.loads(json.dumps(SYM20))
    bad["workload"]["write_ratio"] = 1.5
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(bad)
    assert e.value.field == "workload.write_ratio"

    bad = json.loads(json.dumps(SYM20))
    bad["config"] = {"bogus_ms": 5}
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(bad)
    assert e.value.field == "config.bogus_ms"

    bad = json.loads(json.dumps(SYM20))
    bad["events"] = [{"at_ms": 10, "partition": {"groups": [[0, 1], [2, 3]]}}]
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(bad)
    assert "partition" in e.value.field


def test_latency_expectation_ordering():
    sc = scenario_from_dict(SYM20)
    exp = latency_expectation(sc, client_site=3, leader=0)
    assert exp.c <= exp.l
    assert exp.m_t <= exp.M_t <= exp.N_t
    assert exp.l == 20_000
    assert exp.c == sc.client_local_rtt_us
    assert exp.m_t == 20_000 and exp.N_t == 20_000


def test_crash_stops_node():
    d = json.loads(json.dumps(SYM20))
    d["events"] = [{"at_ms": 700, "crash": 1}]
    sc = scenario_from_dict(d)
    res = run_scenario(sc, seed=2)
    # node 1 is not special: cluster keeps serving, history stays clean
    ok = [r for r in res.history if r.outcome == "ok"]
    assert len(ok) > 50
    from bodega.lincheck import check
    assert check([r.history_row() for r in res.history]) is None
