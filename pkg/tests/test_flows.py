"""Cluster-level flows through the simulator: roster activation, the read
cases, holding and release, roster changes, failures, and catch-up."""
import json

from bodega.lincheck import check
from bodega.model import Ballot
from bodega.sim.harness import Simulation, inject_interfering_write, run_scenario
from bodega.sim.scenario import scenario_from_dict


def sym(n, rtt_ms):
    return [[0 if i == j else rtt_ms for j in range(n)] for i in range(n)]


def base_scenario(**kw):
    d = {
        "name": "flow",
        "nodes": 5,
        "rtt_ms": sym(5, 40),  # 20 ms one-way
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
    }
    d.update(kw)
    return scenario_from_dict(d)


def lin_ok(res):
    return check([r.history_row() for r in res.history]) is None


def test_startup_reaches_stability_everywhere():
    sc = base_scenario()
    sim = Simulation(sc, seed=1, monitors=True)
    sim.run(until=1_000_000)
    assert all(n.bal == Ballot(1, 0) for n in sim.nodes)
    assert all(n.is_stable() for n in sim.nodes)
    assert sim.nodes[0].leader_ready
    assert (1, 0) in sim.all_stable_at


def test_non_responder_redirects_and_responder_serves():
    sc = base_scenario(workload={
        "start_ms": 800, "duration_ms": 800, "keys": 5, "write_ratio": 0.0,
        "clients": [{"site": 1, "count": 1}, {"site": 4, "count": 1}],
    })
    res = run_scenario(sc, seed=2)
    assert lin_ok(res)
    site1 = [r for r in res.history if r.site == 1 and r.outcome == "ok"]
    site4 = [r for r in res.history if r.site == 4 and r.outcome == "ok"]
    assert site1 and site4
    # node 1 is not a responder: its reads bounce to a responder or leader
    assert all(r.contacted >= 2 for r in site1)
    assert res.metrics["node_counters"]["1"].get("reads_redirected", 0) > 0
    # node 4 is a responder: local single-target reads
    assert all(r.contacted == 1 for r in site4)
    lat4 = [r.response - r.invoke for r in site4]
    assert max(lat4) < 5_000  # local RTT, far below any WAN round trip


def test_stable_leader_serves_unwritten_key_null():
    sc = base_scenario(workload={
        "start_ms": 800, "duration_ms": 300, "keys": 3, "write_ratio": 0.0,
        "clients": [{"site": 0, "count": 1}],
    })
    res = run_scenario(sc, seed=3)
    assert lin_ok(res)
    oks = [r for r in res.history if r.outcome == "ok"]
    assert oks and all(r.value is None for r in oks)
    assert all(r.contacted == 1 for r in oks)


def test_unstable_leader_read_falls_back_through_log():
    sc = base_scenario()
    sc.script = scenario_from_dict({
        "name": "x", "nodes": 5, "rtt_ms": sym(5, 40),
        "events": [{"at_ms": 12, "read": {"key": "k", "site": 0, "id": "early_read"}}],
    }).script
    res = run_scenario(sc, seed=4, until=2_000_000)
    rec = next(r for r in res.history if r.request_id == "early_read")
    assert rec.outcome == "ok" and rec.value is None
    assert res.metrics["node_counters"]["0"].get("reads_fallback", 0) >= 1
    assert lin_ok(res)


def test_write_then_read_everywhere_sees_value():
    d = {
        "name": "wr", "nodes": 5, "rtt_ms": sym(5, 40),
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "events": [
            {"at_ms": 900, "write": {"key": "k", "value": "v1", "site": 1, "id": "w1"}},
            {"at_ms": 901, "read": {"key": "k", "site": 4, "id": "r4", "after": "w1"}},
            {"at_ms": 901, "read": {"key": "k", "site": 0, "id": "r0", "after": "w1"}},
        ],
    }
    res = run_scenario(scenario_from_dict(d), seed=5)
    w1 = next(r for r in res.history if r.request_id == "w1")
    r4 = next(r for r in res.history if r.request_id == "r4")
    r0 = next(r for r in res.history if r.request_id == "r0")
    assert w1.outcome == "ok"
    assert r4.value == b"v1" and r0.value == b"v1"
    assert lin_ok(res)


def test_held_read_released_by_early_notes_before_commit():
    # leader->followers one-way: 10,20,25,30 ms; follower<->follower 40 ms.
    rtt = [[0, 20, 40, 50, 60],
           [20, 0, 80, 80, 80],
           [40, 80, 0, 80, 80],
           [50, 80, 80, 0, 80],
           [60, 80, 80, 80, 0]]
    d = {
        "name": "notes", "nodes": 5, "rtt_ms": rtt,
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [0, 4]}]},
        "config": {"unhold_floor_ms": 500},
        "workload": {"start_ms": 1000, "duration_ms": 400, "keys": 1, "key_len": 2,
                     "write_ratio": 0.0, "clients": [{"site": 4, "count": 1}],
                     "mode": {"open_rate_per_s": 500}},
        "events": [{"at_ms": 1150, "write": {"key": "k0", "value": "X", "site": 0, "id": "wx"}}],
    }
    out = inject_interfering_write(scenario_from_dict(d), seed=6, write_rid="wx", read_site=4)
    res = out["result"]
    assert lin_ok(res)
    T = out["accept_at"]
    assert T is not None
    held = [(fin, lat) for fin, lat, _c in out["timeline"] if lat > 2_000]
    assert held, "some reads must have been held"
    # early notes: released at the m-th fastest note (T+50ms), well before the
    # commit notification lands at node 4 (T+90ms)
    for fin, _lat in held:
        assert abs(fin - (T + 50_000) - 250) < 2_000, (fin - T)
    assert out["commit_at_read_site"] is not None
    assert abs(out["commit_at_read_site"] - (T + 90_000)) < 2_000
    # with early notes disabled the same reads wait for the commit
    d["config"]["early_notes"] = False
    out2 = inject_interfering_write(scenario_from_dict(d), seed=6, write_rid="wx", read_site=4)
    assert lin_ok(out2["result"])
    T2 = out2["accept_at"]
    held2 = [(fin, lat) for fin, lat, _c in out2["timeline"] if lat > 2_000]
    assert held2
    for fin, _lat in held2:
        assert abs(fin - (T2 + 90_000) - 250) < 2_000, (fin - T2)


def test_explicit_roster_change_two_rounds():
    d = {
        "name": "change", "nodes": 5, "rtt_ms": sym(5, 40),
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "events": [{"at_ms": 2000, "roster_set": {
            "to_node": 0, "leader": 0,
            "ranges": [{"lo": "", "hi": None, "responders": [1, 2]}]}}],
    }
    sc = scenario_from_dict(d)
    sim = Simulation(sc, seed=7, monitors=True)
    sim.run(until=4_000_000)
    assert all(n.bal == Ballot(2, 0) for n in sim.nodes)
    assert all(n.is_stable() for n in sim.nodes)
    t_stable = sim.all_stable_at[(2, 0)]
    # two message rounds (revoke + guard/renew) plus heartbeat slack
    assert t_stable - 2_000_000 <= 80_000 + sim.cfg.t_hb_send
    assert not sim.violations


def test_two_concurrent_announcers_highest_ballot_wins():
    d = {
        "name": "dual", "nodes": 3, "rtt_ms": sym(3, 20),
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [1, 2]}]},
        "events": [
            {"at_ms": 1500, "roster_set": {"to_node": 1, "leader": 0,
                "ranges": [{"lo": "", "hi": None, "responders": [1]}]}},
            {"at_ms": 1500, "roster_set": {"to_node": 2, "leader": 0,
                "ranges": [{"lo": "", "hi": None, "responders": [2]}]}},
        ],
    }
    sc = scenario_from_dict(d)
    sim = Simulation(sc, seed=8, monitors=True)
    sim.run(until=6_000_000)
    assert not sim.violations
    # both proposals used round 2; the higher node id wins everywhere
    assert all(n.bal == Ballot(2, 2) for n in sim.nodes)
    assert all(n.is_stable() for n in sim.nodes)


def test_responder_crash_blocks_then_roster_change_resumes_writes():
    d = {
        "name": "crash-responder", "nodes": 5, "rtt_ms": sym(5, 40),
        "config": {"hb_send_ms": 60, "hb_fail_ms": 400, "guard_ms": 900, "lease_ms": 900,
                   "delta_ms": 40, "hb_fail_jitter": 0.0},
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "workload": {"start_ms": 500, "duration_ms": 4000, "keys": 5, "write_ratio": 0.5,
                     "clients": [{"site": 0, "count": 2}], "op_timeout_ms": 8000},
        "events": [{"at_ms": 1000, "crash": 4}],
    }
    sc = scenario_from_dict(d)
    sim = Simulation(sc, seed=9, monitors=True)
    res = sim.run(until=7_000_000)
    assert lin_ok(res)
    assert not sim.violations
    ok_writes = [r for r in res.history if r.op == "put" and r.outcome == "ok"]
    blocked = [r for r in ok_writes if r.invoke > 1_000_000 and r.response - r.invoke > 500_000]
    resumed = [r for r in ok_writes if r.invoke > 3_500_000 and r.response - r.invoke < 300_000]
    assert blocked, "writes right after the crash must stall on the dead responder"
    assert resumed, "writes must flow again after the failure-triggered change"
    # the dead responder is out of every responder set afterwards
    for n in (0, 1, 2, 3):
        assert 4 not in sim.nodes[n].ros.special_nodes()
        assert sim.nodes[n].bal.round == 2


def test_leader_crash_fails_over_and_history_stays_linearizable():
    d = {
        "name": "crash-leader", "nodes": 5, "rtt_ms": sym(5, 40),
        "config": {"hb_send_ms": 60, "hb_fail_ms": 400, "guard_ms": 900, "lease_ms": 900,
                   "delta_ms": 40},
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "workload": {"start_ms": 500, "duration_ms": 4500, "keys": 5, "write_ratio": 0.3,
                     "clients": [{"site": 1, "count": 1}, {"site": 3, "count": 1}],
                     "op_timeout_ms": 8000},
        "events": [{"at_ms": 1200, "crash": 0}],
    }
    sc = scenario_from_dict(d)
    sim = Simulation(sc, seed=10, monitors=True)
    res = sim.run(until=8_000_000)
    assert lin_ok(res)
    assert not sim.violations
    survivors = [sim.nodes[i] for i in range(1, 5)]
    new_leader = {n.ros.leader for n in survivors}
    assert new_leader == {1}, "lowest healthy id takes over"
    late_ok = [r for r in res.history if r.invoke > 4_000_000 and r.outcome == "ok"]
    assert late_ok, "cluster serves again after failover"


def test_partition_heal_catch_up():
    d = {
        "name": "part", "nodes": 5, "rtt_ms": sym(5, 40),
        "config": {"hb_send_ms": 60, "hb_fail_ms": 2000, "guard_ms": 2500, "lease_ms": 2500},
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "workload": {"start_ms": 500, "duration_ms": 3000, "keys": 5, "write_ratio": 0.4,
                     "clients": [{"site": 0, "count": 2}], "op_timeout_ms": 6000},
        "events": [{"at_ms": 1000, "partition": {"groups": [[0, 1, 2, 3], [4]], "heal_ms": 2200}}],
    }
    sc = scenario_from_dict(d)
    sim = Simulation(sc, seed=11, monitors=True)
    res = sim.run(until=6_000_000)
    assert lin_ok(res)
    assert not sim.violations
    # node 4 missed traffic during the partition but catches up afterwards
    assert sim.nodes[4].log.exec_prefix == sim.nodes[0].log.exec_prefix


def test_unhold_reissue_when_commit_outruns_patience():
    rtt = [[0, 20, 20, 60, 20],
           [20, 0, 20, 60, 20],
           [20, 20, 0, 60, 20],
           [60, 60, 60, 0, 60],
           [20, 20, 20, 60, 0]]
    d = {
        "name": "unhold", "nodes": 5, "rtt_ms": rtt,
        "config": {"unhold_floor_ms": 50, "early_notes": False},
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "workload": {"start_ms": 1000, "duration_ms": 500, "keys": 1, "key_len": 2,
                     "write_ratio": 0.0, "clients": [{"site": 3, "count": 1}],
                     "mode": {"open_rate_per_s": 200}},
        "events": [{"at_ms": 1200, "write": {"key": "k0", "value": "X", "site": 0, "id": "wx"}}],
    }
    res = run_scenario(scenario_from_dict(d), seed=12)
    assert lin_ok(res)
    reissued = [r for r in res.history if r.op == "get" and r.outcome == "ok" and r.contacted >= 2]
    assert reissued, "held reads at the slow responder must duplicate elsewhere"


def test_crashed_responder_read_reissue_succeeds_elsewhere():
    d = {
        "name": "dead-target", "nodes": 5, "rtt_ms": sym(5, 40),
        "config": {"hb_fail_ms": 2000, "guard_ms": 2500, "lease_ms": 2500},
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "workload": {"start_ms": 1000, "duration_ms": 600, "keys": 3, "write_ratio": 0.0,
                     "clients": [{"site": 3, "count": 1}]},
        "events": [{"at_ms": 900, "crash": 3}],
    }
    res = run_scenario(scenario_from_dict(d), seed=13)
    assert lin_ok(res)
    ok = [r for r in res.history if r.op == "get" and r.outcome == "ok"]
    assert ok and all(r.contacted >= 2 for r in ok)


def test_steady_state_heartbeats_are_lightweight():
    sc = base_scenario()
    res = run_scenario(sc, seed=14, trace=True, until=3_000_000)
    full_after_stable = 0
    for line in res.trace:
        d = json.loads(line)
        msg = d.get("msg", {})
        if msg.get("kind") == "Heartbeat" and d["t"] > 1_000_000:
            if msg.get("roster") is not None and d.get("frm") != d.get("to"):
                full_after_stable += 1
    assert full_after_stable == 0


def test_snapshot_taken_and_reads_keep_working():
    d = {
        "name": "snap", "nodes": 5, "rtt_ms": sym(5, 40),
        "config": {"snapshot_every": 20},
        "initial_roster": {"announcer": 0, "at_ms": 10, "leader": 0,
                           "ranges": [{"lo": "", "hi": None, "responders": [2, 3, 4]}]},
        "workload": {"start_ms": 500, "duration_ms": 2500, "keys": 4, "write_ratio": 0.5,
                     "clients": [{"site": 0, "count": 2}, {"site": 4, "count": 1}]},
    }
    sc = scenario_from_dict(d)
    sim = Simulation(sc, seed=15, monitors=True)
    res = sim.run(until=5_000_000)
    assert lin_ok(res)
    assert not sim.violations
    assert all(n.counters.get("snapshots", 0) >= 1 for n in sim.nodes)
    assert all(n.log.snap_upto > 0 for n in sim.nodes)
