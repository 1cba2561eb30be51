"""Bounded systematic exploration of message interleavings.

A fixed small configuration (3 nodes, up to 3 ballot rounds, 2 scripted
writes + 2 scripted reads) is replayed under systematically enumerated
schedule variations:

  * the responder assignment of the initial roster,
  * an optional mid-run roster change,
  * one optional crash (node x instant),
  * up to `max_delays` consensus/lease message deliveries postponed by a
    fixed large amount, enumerated over the first `max_send_index` such
    sends (delay-bounded exploration).

Every run is checked for linearizability, agreement, and the
single-stable-roster invariant. The same harness with a seeded mutation
("commit_no_responder_coverage" or "stable_no_thresh") must produce a
counterexample; that is how the checker itself is validated.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import combinations

from ..lincheck import check
from ..messages import Accept, AcceptNote, AcceptReply, CatchUpReply, CatchUpRequest, Commit
from .harness import Simulation
from .scenario import scenario_from_dict

INTERESTING = (Accept, AcceptReply, AcceptNote, Commit, CatchUpRequest, CatchUpReply)
EXTRA_DELAY = 300_000


@dataclass(slots=True)
class ExploreConfig:
    responders: tuple[int, ...]
    change: bool  # roster change to responders {1, 2} at 180 ms
    crash: tuple[int, int] | None  # (node, at_us)
    delays: tuple[int, ...] = ()  # interesting-send indices to postpone

    def label(self) -> str:
        parts = [f"resp={list(self.responders)}", f"change={self.change}"]
        if self.crash:
            parts.append(f"crash=n{self.crash[0]}@{self.crash[1] // 1000}ms")
        if self.delays:
            parts.append(f"delayed={list(self.delays)}")
        return " ".join(parts)


@dataclass(slots=True)
class ExploreResult:
    ok: bool
    runs: int
    budget_exhausted: bool
    counterexample: dict | None = None
    elapsed_s: float = 0.0

    def summary(self) -> str:
        if self.ok:
            extra = " (budget exhausted: partial verdict)" if self.budget_exhausted else ""
            return f"no violation in {self.runs} bounded runs{extra}"
        c = self.counterexample or {}
        return (
            f"counterexample after {self.runs} runs: {c.get('config')}\n"
            + "\n".join(c.get("violations", []))
        )


def _scenario_dict(cfg: ExploreConfig) -> dict:
    d = {
        "name": "explore",
        "nodes": 3,
        "rtt_ms": [[0, 20, 20], [20, 0, 20], [20, 20, 0]],
        "config": {
            "hb_send_ms": 150, "hb_fail_ms": 400, "guard_ms": 800, "lease_ms": 800,
            "delta_ms": 40, "hb_fail_jitter": 0.0, "unhold_floor_ms": 60,
        },
        "initial_roster": {
            "announcer": 0, "at_ms": 5, "leader": 0,
            "ranges": [{"lo": "", "hi": None, "responders": list(cfg.responders)}],
        },
        "events": [
            {"at_ms": 150, "write": {"key": "x", "value": "1", "site": 1, "id": "W1"}},
            {"at_ms": 151, "write": {"key": "x", "value": "2", "site": 1,
                                      "id": "W2", "after": "R2"}},
            {"at_ms": 152, "read": {"key": "x", "site": 2, "id": "R1", "after": "W1"}},
            {"at_ms": 250, "read": {"key": "x", "site": 2, "id": "R2", "after": "W1"}},
        ],
        "workload": {"start_ms": 0, "duration_ms": 0, "clients": [], "op_timeout_ms": 2500},
    }
    if cfg.change:
        d["events"].append({"at_ms": 180, "roster_set": {
            "to_node": 0, "leader": 0,
            "ranges": [{"lo": "", "hi": None, "responders": [1, 2]}]}})
    if cfg.crash:
        d["events"].append({"at_ms": cfg.crash[1] // 1000, "crash": cfg.crash[0]})
    return d


class _Chooser:
    """Postpones the i-th interesting send for every i in `delays`."""

    def __init__(self, delays: tuple[int, ...]) -> None:
        self.delays = set(delays)
        self.idx = 0
        self.count = 0

    def __call__(self, _send_seq, _frm, _to, d, msg):
        if msg is None or not isinstance(msg, INTERESTING):
            return d
        i = self.idx
        self.idx += 1
        self.count = self.idx
        if d is not None and i in self.delays:
            return d + EXTRA_DELAY
        return d


def _one_run(cfg: ExploreConfig, mutations: frozenset[str], seed: int = 0) -> tuple[list[str], Simulation]:
    sc = scenario_from_dict(_scenario_dict(cfg))
    chooser = _Chooser(cfg.delays)
    sim = Simulation(sc, seed, monitors=True, mutations=mutations,
                     drift=False, delay_chooser=chooser)
    res = sim.run(until=3_200_000)
    violations = list(sim.violations)
    v = check([r.history_row() for r in res.history])
    if v is not None:
        violations.append("linearizability: " + v.describe())
    return violations, sim


def explore_interleavings(
    nodes: int = 3,
    ballots: int = 3,
    mutations: frozenset[str] = frozenset(),
    max_send_index: int = 36,
    max_delays: int = 2,
    budget_runs: int = 12_000,
    time_budget_s: float = 110.0,
) -> ExploreResult:
    """Systematic bounded search; returns the first counterexample if any.

    The configuration space is fixed at 3 nodes and at most 3 ballot rounds
    (initial announcement, one proactive change, one failure-induced change);
    `nodes`/`ballots` are validated against that bound.
    """
    if nodes != 3:
        raise ValueError("the bounded exploration space is fixed at 3 nodes")
    if ballots < 3:
        raise ValueError("at least 3 ballot rounds are exercised")
    started = time.monotonic()
    runs = 0
    budget_exhausted = False

    responder_choices = ((), (1,), (2,), (1, 2))
    crash_choices: list[tuple[int, int] | None] = [None]
    for node in range(3):
        for at_ms in (160, 300):
            crash_choices.append((node, at_ms * 1000))

    def out_of_budget() -> bool:
        return runs >= budget_runs or time.monotonic() - started > time_budget_s

    def attempt(cfg: ExploreConfig) -> dict | None:
        nonlocal runs
        runs += 1
        violations, _sim = _one_run(cfg, mutations)
        if violations:
            return {"config": cfg.label(), "violations": violations}
        return None

    # pass 1: delay-only schedules (0, 1, then 2 postponed deliveries)
    delay_sets: list[tuple[int, ...]] = [()]
    delay_sets += [(i,) for i in range(max_send_index)]
    if max_delays >= 2:
        delay_sets += [p for p in combinations(range(max_send_index), 2)]
    for resp in responder_choices:
        for change in (False, True):
            for delays in delay_sets:
                if out_of_budget():
                    budget_exhausted = True
                    return ExploreResult(True, runs, True,
                                         elapsed_s=time.monotonic() - started)
                bad = attempt(ExploreConfig(resp, change, None, delays))
                if bad is not None:
                    return ExploreResult(False, runs, False, bad,
                                         time.monotonic() - started)
    # pass 2: one crash combined with at most one postponed delivery
    for crash in crash_choices[1:]:
        for resp in responder_choices:
            for change in (False, True):
                for delays in [()] + [(i,) for i in range(max_send_index)]:
                    if out_of_budget():
                        budget_exhausted = True
                        return ExploreResult(True, runs, True,
                                             elapsed_s=time.monotonic() - started)
                    bad = attempt(ExploreConfig(resp, change, crash, delays))
                    if bad is not None:
                        return ExploreResult(False, runs, False, bad,
                                             time.monotonic() - started)
    return ExploreResult(True, runs, budget_exhausted,
                         elapsed_s=time.monotonic() - started)
