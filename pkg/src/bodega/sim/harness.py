"""Deterministic discrete-event simulator hosting the protocol cores.

Virtual time is integer microseconds. Every run is a pure function of
(scenario, seed): the event heap breaks ties by insertion sequence, all
randomness flows from seeded generators, and nodes never see anything but
their own drifting local clocks.
"""
from __future__ import annotations

import heapq
import json
import math
import random
import zlib
from dataclasses import dataclass, field

from ..events import ArmTimer, CancelTimer, ClientRequest, Deliver, OperatorRequest, Reply, Send, TimerFire
from ..messages import (
    ClientReadReply,
    ClientRedirect,
    ClientUnavailable,
    ClientWriteReply,
    CtlReply,
    msg_to_wire,
)
from ..model import Command, NodeId
from ..node import Node
from ..reads import ClientArm, ClientCache, ClientDone, ClientSend, ClientSession
from .scenario import Scenario, ScriptEvent


@dataclass(slots=True)
class ClockModel:
    """Per-node local clock: monotone, skewed, and drifting at a fixed rate."""

    skew: int
    rate: float  # local seconds per global second, minus one

    def local(self, t_global: int) -> int:
        return self.skew + t_global + int(self.rate * t_global)

    def global_of(self, t_local: int) -> int:
        return max(0, math.ceil((t_local - self.skew) / (1.0 + self.rate)))


class NetworkModel:
    """Per-pair delays with jitter, loss, and partitions."""

    def __init__(self, sc: Scenario, rng: random.Random) -> None:
        self.sc = sc
        self.rng = rng
        self.partition: dict[int, int] | None = None

    def set_partition(self, groups: tuple[tuple[int, ...], ...] | None) -> None:
        if groups is None:
            self.partition = None
        else:
            self.partition = {n: gi for gi, g in enumerate(groups) for n in g}

    def delay(self, a: int, b: int) -> int | None:
        """One-way node-to-node delay, or None when the message is lost.
        Loopback is instant and reliable."""
        if a == b:
            return 0
        if self.partition is not None and self.partition[a] != self.partition[b]:
            return None
        d = self.sc.one_way_us(a, b)
        if self.sc.jitter_us:
            d += self.rng.randrange(self.sc.jitter_us + 1)
        if self.sc.drop_prob and self.rng.random() < self.sc.drop_prob:
            return None
        return d

    def client_delay(self, site: int, node: int) -> int | None:
        """One-way delay between a client co-located at `site` and a node.
        The last co-located hop is short but never free."""
        if site == node:
            return self.sc.one_way_us(site, site)
        return self.delay(site, node)


@dataclass(slots=True)
class OpRecord:
    client: str
    request_id: str
    op: str
    key: bytes
    value: bytes | None
    invoke: int
    response: int | None
    outcome: str  # "ok" | "timeout" | "redirected"
    site: int
    contacted: int

    def history_row(self) -> dict:
        return {
            "client": self.client,
            "request_id": self.request_id,
            "op": self.op,
            "key": self.key.decode("latin-1"),
            "value": None if self.value is None else self.value.decode("latin-1"),
            "invoke": self.invoke,
            "response": self.response,
            "outcome": self.outcome,
        }


@dataclass(slots=True)
class SimResult:
    history: list[OpRecord]
    trace: list[str]
    metrics: dict
    violations: list[str]
    digests: dict[int, str]


@dataclass(slots=True)
class _ClientState:
    cid: str
    site: int
    cache: ClientCache
    rng: random.Random
    ops_done: int = 0
    session: ClientSession | None = None
    record: OpRecord | None = None
    timer_gen: int = 0
    closed_loop: bool = True


class Simulation:
    def __init__(
        self,
        sc: Scenario,
        seed: int,
        trace: bool = False,
        monitors: bool = False,
        mutations: frozenset[str] = frozenset(),
        drift: bool = True,
        delay_chooser=None,
    ) -> None:
        self.sc = sc
        self.seed = seed
        self.cfg = sc.cluster_config()
        self.trace_on = trace
        self.monitors = monitors
        self.delay_chooser = delay_chooser  # exploration hook: (idx, a, b, d) -> d
        self.net_rng = random.Random((seed * 2654435761) & 0xFFFFFFFF)
        self.net = NetworkModel(sc, self.net_rng)
        rho = sc.drift_rate_bound() if drift else 0.0
        skew_rng = random.Random(seed ^ 0x5EED)
        self.clocks = [
            ClockModel(skew=skew_rng.randrange(10_000), rate=rho * (1 if i % 2 else -1))
            for i in range(sc.n)
        ]
        self.nodes = [Node(i, self.cfg, seed=seed, mutations=mutations) for i in range(sc.n)]
        self.alive = [True] * sc.n
        self.heap: list = []
        self.seq = 0
        self.now = 0
        self.sends = 0
        self.node_timers: list[dict[tuple, tuple[int, int]]] = [dict() for _ in range(sc.n)]
        self.clients: dict[str, _ClientState] = {}
        self.history: list[OpRecord] = []
        self.trace: list[str] = []
        self.violations: list[str] = []
        self.completed_ops: set[str] = set()
        self.waiting_script: dict[str, list[ScriptEvent]] = {}
        self._exec_seen = [0] * sc.n
        self._exec_digests: dict[int, tuple] = {}
        self._stable_bal: dict[int, tuple] = {}
        self.all_stable_at: dict[tuple, int] = {}  # ballot -> first instant all alive nodes stable
        self.t_end = 0

    # ------------------------------------------------------------- plumbing

    def _push(self, t: int, kind: str, *data) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, self.seq, kind, data))

    def _trace(self, t: int, kind: str, detail: dict) -> None:
        if self.trace_on:
            row = {"t": t, "kind": kind}
            row.update(detail)
            self.trace.append(json.dumps(row, sort_keys=True, separators=(",", ":")))

    def _send_node(self, frm: int, to: int, msg) -> None:
        d = self.net.delay(frm, to)
        if self.delay_chooser is not None and frm != to:
            d = self.delay_chooser(self.sends, frm, to, d, msg)
        self.sends += 1
        if d is None:
            return
        self._push(self.now + d, "nmsg", to, frm, msg)

    def _send_client_req(self, cs: _ClientState, target: int, cmd: Command, fresh: bool) -> None:
        d = self.net.client_delay(cs.site, target)
        if self.delay_chooser is not None and cs.site != target:
            d = self.delay_chooser(self.sends, cs.site, target, d, None)
        self.sends += 1
        if d is None:
            return
        want = cs.cache.wants_roster()
        ev = ClientRequest(cs.cid, cmd, preferred=cs.site, want_roster=want, fresh=fresh)
        self._push(self.now + d, "creq", target, ev)

    def _reply_to_client(self, frm_node: int, client: str, msg) -> None:
        cs = self.clients.get(client)
        if cs is None:
            return
        d = self.net.client_delay(cs.site, frm_node)
        self.sends += 1
        if d is None:
            return
        self._push(self.now + d, "cmsg", client, frm_node, msg)

    def _apply_outputs(self, node_id: int, outs: list) -> None:
        timers = self.node_timers[node_id]
        clock = self.clocks[node_id]
        for o in outs:
            if isinstance(o, Send):
                self._send_node(node_id, o.to, o.msg)
            elif isinstance(o, Reply):
                self._reply_to_client(node_id, o.client, o.msg)
            elif isinstance(o, ArmTimer):
                gen = timers.get(o.key, (0, 0))[1] + 1
                timers[o.key] = (o.deadline, gen)
                self._push(clock.global_of(o.deadline), "ntimer", node_id, o.key, gen)
            elif isinstance(o, CancelTimer):
                if o.key in timers:
                    dl, gen = timers[o.key]
                    timers[o.key] = (dl, gen + 1)

    def _node_event(self, node_id: int, ev) -> None:
        if not self.alive[node_id]:
            return
        node = self.nodes[node_id]
        now_local = self.clocks[node_id].local(self.now)
        outs = node.handle(ev, now_local)
        self._apply_outputs(node_id, outs)
        if self.monitors:
            self._check_monitors(node_id)

    # ------------------------------------------------------------- monitors

    def _check_monitors(self, node_id: int) -> None:
        node = self.nodes[node_id]
        log = node.log
        seen = self._exec_seen[node_id]
        while seen < log.exec_prefix:
            seen += 1
            s = log.slots.get(seen)
            if s is not None:
                digest = tuple((c.kind, c.key, c.value, c.request_id) for c in s.batch)
                prev = self._exec_digests.get(seen)
                if prev is None:
                    self._exec_digests[seen] = digest
                elif prev != digest:
                    self.violations.append(
                        f"agreement: slot {seen} executed differently at node {node_id}"
                    )
        self._exec_seen[node_id] = seen
        if node.is_stable() and self.alive[node_id]:
            self._stable_bal[node_id] = (node.bal.round, node.bal.node)
        else:
            self._stable_bal.pop(node_id, None)
        live = {b for n, b in self._stable_bal.items() if self.alive[n]}
        if len(live) > 1:
            self.violations.append(
                f"stability: two stable ballots at t={self.now}: {sorted(live)}"
            )
        if len(live) == 1 and len(self._stable_bal) == sum(self.alive):
            self.all_stable_at.setdefault(next(iter(live)), self.now)

    # -------------------------------------------------------------- clients

    def _client_outputs(self, cs: _ClientState, outs: list) -> None:
        for o in outs:
            if isinstance(o, ClientSend):
                sess = cs.session
                if sess is None:
                    continue
                cmd = Command(
                    "put" if sess.is_write else "get",
                    sess.key,
                    cs.record.value if sess.is_write else None,
                    sess.request_id,
                )
                if cs.record is not None:
                    cs.record.contacted = len(set(sess.contacted))
                self._send_client_req(cs, o.target, cmd, o.fresh)
            elif isinstance(o, ClientArm):
                cs.timer_gen += 1
                self._push(o.deadline, "ctimer", cs.cid, cs.timer_gen)
            elif isinstance(o, ClientDone):
                rec = cs.record
                if rec is not None:
                    rec.response = self.now
                    rec.outcome = o.outcome
                    if rec.op == "get":
                        rec.value = o.value
                    if o.outcome != "ok":
                        rec.response = None
                    rec.contacted = len(set(cs.session.contacted)) if cs.session else 0
                    self.history.append(rec)
                    self._op_completed(rec.request_id)
                cs.session = None
                cs.record = None
                cs.timer_gen += 1  # invalidate pending timer
                if cs.closed_loop:
                    nxt = self.now + max(1, self.sc.workload.think)
                    if nxt < self.sc.workload.start + self.sc.workload.duration:
                        self._push(nxt, "cbegin", cs.cid)

    def _begin_op(self, cs: _ClientState, op: str, key: bytes, value: bytes | None, rid: str) -> None:
        sess = ClientSession(
            cache=cs.cache,
            request_id=rid,
            key=key,
            is_write=op == "put",
            started=self.now,
            patience=self.sc.workload.op_timeout,
        )
        cs.session = sess
        cs.record = OpRecord(
            client=cs.cid, request_id=rid, op=op, key=key, value=value,
            invoke=self.now, response=None, outcome="timeout",
            site=cs.site, contacted=0,
        )
        self._client_outputs(cs, sess.begin())

    def _gen_op(self, cs: _ClientState) -> tuple[str, bytes, bytes | None, str]:
        w = self.sc.workload
        rng = cs.rng
        if w.zipf_theta > 0.0:
            idx = self._zipf(rng, w.keys, w.zipf_theta)
        else:
            idx = rng.randrange(w.keys)
        key = (b"k%0*d" % (max(1, w.key_len - 1), idx))[: max(2, w.key_len)]
        is_write = rng.random() < w.write_ratio
        cs.ops_done += 1
        rid = f"{cs.cid}.{cs.ops_done}"
        if is_write:
            value = (f"v.{cs.cid}.{cs.ops_done}." .encode() + b"x" * w.value_len)[: w.value_len]
            return "put", key, value, rid
        return "get", key, None, rid

    _zipf_cache: dict[tuple[int, float], list[float]] = {}

    @classmethod
    def _zipf(cls, rng: random.Random, n: int, theta: float) -> int:
        cdf = cls._zipf_cache.get((n, theta))
        if cdf is None:
            weights = [1.0 / ((i + 1) ** theta) for i in range(n)]
            total = sum(weights)
            acc = 0.0
            cdf = []
            for w in weights:
                acc += w / total
                cdf.append(acc)
            cls._zipf_cache[(n, theta)] = cdf
        x = rng.random()
        lo, hi = 0, n - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def _op_completed(self, op_id: str) -> None:
        self.completed_ops.add(op_id)
        for ev in self.waiting_script.pop(op_id, []):
            self._push(max(self.now + 1000, ev.at), "script_op", ev)

    # ---------------------------------------------------------------- setup

    def _setup(self) -> None:
        for i in range(self.sc.n):
            self.now = 0
            self._apply_outputs(i, self.nodes[i].start(self.clocks[i].local(0)))
        if self.sc.initial_roster is not None:
            self._push(self.sc.initial_at, "roster_set",
                       self.sc.initial_announcer, self.sc.initial_roster)
        w = self.sc.workload
        idx = 0
        for grp in w.clients:
            for _k in range(grp.count):
                cid = f"w{grp.site}.{idx}"
                idx += 1
                cs = _ClientState(
                    cid=cid, site=grp.site,
                    cache=ClientCache(grp.site, self.sc.n, self.cfg.t_unhold),
                    rng=random.Random((self.seed * 1_000_003) ^ zlib.crc32(cid.encode())),
                )
                self.clients[cid] = cs
                if w.open_rate_per_s > 0:
                    cs.closed_loop = False
                    period = int(1_000_000 / w.open_rate_per_s)
                    t = w.start + (idx % max(1, period))
                    while t < w.start + w.duration:
                        self._push(t, "cbegin", cid)
                        t += period
                else:
                    self._push(w.start + idx * 137, "cbegin", cid)
        end_candidates = [w.start + w.duration if w.clients else 0]
        for ev in self.sc.script:
            if ev.kind in ("write", "read"):
                self._push(ev.at, "script_op", ev)
            elif ev.kind == "crash":
                self._push(ev.at, "crash", ev.node)
            elif ev.kind == "partition":
                self._push(ev.at, "part", ev.groups)
                if ev.heal_at:
                    self._push(ev.heal_at, "part", None)
            elif ev.kind == "roster_set":
                self._push(ev.at, "roster_set", ev.node, ev.roster)
            end_candidates.append(max(ev.at, ev.heal_at))
        self.t_end = max(end_candidates) + 2_000_000

    def _run_script_op(self, ev: ScriptEvent) -> None:
        if ev.after and ev.after not in self.completed_ops:
            self.waiting_script.setdefault(ev.after, []).append(ev)
            return
        cid = ev.op_id
        cs = self.clients.get(cid)
        if cs is None:
            cs = _ClientState(
                cid=cid, site=ev.site,
                cache=ClientCache(ev.site, self.sc.n, self.cfg.t_unhold),
                rng=random.Random(self.seed ^ 0xAB),
            )
            self.clients[cid] = cs
            cs.closed_loop = False
        if ev.kind == "write":
            self._begin_op(cs, "put", ev.key, ev.value, ev.op_id)
        else:
            self._begin_op(cs, "get", ev.key, None, ev.op_id)

    # ----------------------------------------------------------------- loop

    def run(self, until: int | None = None) -> SimResult:
        self._setup()
        t_end = until if until is not None else self.t_end
        while self.heap:
            t, _seq, kind, data = heapq.heappop(self.heap)
            if t > t_end:
                break
            self.now = t
            if kind == "nmsg":
                to, frm, msg = data
                self._trace(t, "deliver", {"to": to, "frm": frm, "msg": msg_to_wire(msg)} if self.trace_on else {})
                self._node_event(to, Deliver(frm, msg))
            elif kind == "ntimer":
                node_id, key, gen = data
                cur = self.node_timers[node_id].get(key)
                if cur is None or cur[1] != gen or not self.alive[node_id]:
                    continue
                del self.node_timers[node_id][key]
                self._trace(t, "timer", {"node": node_id, "key": list(key)})
                self._node_event(node_id, TimerFire(key))
            elif kind == "creq":
                target, ev = data
                self._trace(t, "creq", {"node": target, "client": ev.client,
                                        "rid": ev.cmd.request_id, "op": ev.cmd.kind})
                self._node_event(target, ev)
            elif kind == "cmsg":
                cid, frm_node, msg = data
                self._client_msg(cid, frm_node, msg)
            elif kind == "ctimer":
                cid, gen = data
                cs = self.clients.get(cid)
                if cs is None or gen != cs.timer_gen or cs.session is None:
                    continue
                self._client_outputs(cs, cs.session.on_timer(self.now))
            elif kind == "cbegin":
                cs = self.clients[data[0]]
                if cs.session is None:
                    op, key, value, rid = self._gen_op(cs)
                    self._begin_op(cs, op, key, value, rid)
            elif kind == "script_op":
                self._run_script_op(data[0])
            elif kind == "crash":
                self.alive[data[0]] = False
                self._stable_bal.pop(data[0], None)
                self._trace(t, "crash", {"node": data[0]})
            elif kind == "part":
                self.net.set_partition(data[0])
                self._trace(t, "part", {"groups": data[0] and [list(g) for g in data[0]]})
            elif kind == "roster_set":
                node_id, roster = data
                self._trace(t, "roster_set", {"node": node_id})
                self._node_event(node_id, OperatorRequest("roster_set", "op", roster))
        # flush ops still in flight as timeouts
        for cs in self.clients.values():
            if cs.record is not None:
                cs.record.response = None
                cs.record.outcome = "timeout"
                cs.record.contacted = len(set(cs.session.contacted)) if cs.session else 0
                self.history.append(cs.record)
                cs.session = None
                cs.record = None
        self.history.sort(key=lambda r: (r.invoke, r.request_id))
        return SimResult(
            history=self.history,
            trace=self.trace,
            metrics=self._metrics(),
            violations=self.violations,
            digests={i: self.nodes[i].state_digest() for i in range(self.sc.n)},
        )

    def _client_msg(self, cid: str, frm_node: int, msg) -> None:
        cs = self.clients.get(cid)
        if cs is None:
            return
        if isinstance(msg, CtlReply):
            return
        sess = cs.session
        if sess is None:
            return
        if isinstance(msg, ClientReadReply):
            if msg.request_id != sess.request_id:
                return
            outs = sess.on_reply("read", msg.value, None, msg.bal, msg.roster, self.now)
        elif isinstance(msg, ClientWriteReply):
            if msg.request_id != sess.request_id:
                return
            outs = sess.on_reply("write", None, None, msg.bal, msg.roster, self.now)
        elif isinstance(msg, ClientRedirect):
            if msg.request_id != sess.request_id:
                return
            outs = sess.on_reply("redirect", None, msg.target, msg.bal, msg.roster, self.now)
        elif isinstance(msg, ClientUnavailable):
            if msg.request_id != sess.request_id:
                return
            outs = sess.on_reply("unavailable", None, None, None, None, self.now)
        else:
            return
        self._client_outputs(cs, outs)

    # --------------------------------------------------------------- metrics

    def _metrics(self) -> dict:
        def agg(samples: list[int]) -> dict:
            if not samples:
                return {"count": 0}
            s = sorted(samples)
            return {
                "count": len(s),
                "mean_ms": round(sum(s) / len(s) / 1000.0, 3),
                "p50_ms": round(s[len(s) // 2] / 1000.0, 3),
                "p99_ms": round(s[min(len(s) - 1, int(len(s) * 0.99))] / 1000.0, 3),
            }

        reads, writes = [], []
        per_site: dict[int, dict[str, list[int]]] = {}
        touch: dict[int, int] = {i: 0 for i in range(self.sc.n)}
        local_reads = 0
        ok_reads = 0
        for r in self.history:
            if r.outcome != "ok" or r.response is None:
                continue
            lat = r.response - r.invoke
            site = per_site.setdefault(r.site, {"read": [], "write": []})
            if r.op == "get":
                reads.append(lat)
                site["read"].append(lat)
                ok_reads += 1
                if r.contacted == 1:
                    local_reads += 1
            else:
                writes.append(lat)
                site["write"].append(lat)
        for i, node in enumerate(self.nodes):
            touch[i] = (
                node.counters.get("reads_local", 0)
                + node.counters.get("reads_held", 0)
                + node.counters.get("reads_redirected", 0)
                + node.counters.get("reads_fallback", 0)
            )
        return {
            "reads": agg(reads),
            "writes": agg(writes),
            "per_site": {
                str(k): {"read": agg(v["read"]), "write": agg(v["write"])}
                for k, v in sorted(per_site.items())
            },
            "locality": {
                "ok_reads": ok_reads,
                "local_reads": local_reads,
                "frac": round(local_reads / ok_reads, 4) if ok_reads else None,
            },
            "touch_counts": touch,
            "node_counters": {str(i): dict(sorted(n.counters.items())) for i, n in enumerate(self.nodes)},
        }


def run_scenario(
    sc: Scenario,
    seed: int,
    trace: bool = False,
    monitors: bool = False,
    mutations: frozenset[str] = frozenset(),
    drift: bool = True,
    until: int | None = None,
) -> SimResult:
    """Run one scenario deterministically; same (scenario, seed) gives a
    byte-identical trace."""
    sim = Simulation(sc, seed, trace=trace, monitors=monitors,
                     mutations=mutations, drift=drift)
    return sim.run(until=until)


def inject_interfering_write(sc: Scenario, seed: int, write_rid: str, read_site: int) -> dict:
    """Run a scenario containing one scripted interfering write against a
    stream of local reads; returns the read-latency timeline around the write
    and the write's protocol timestamps extracted from the trace.

    The scenario must script the write with op id `write_rid` and keep
    open-loop readers at `read_site`.
    """
    res = run_scenario(sc, seed, trace=True)
    accept_at = None
    commit_seen_at = None
    slot = None
    for line in res.trace:
        d = json.loads(line)
        msg = d.get("msg")
        if not msg:
            continue
        if msg.get("kind") == "Accept" and accept_at is None:
            if write_rid in line and d.get("to") == d.get("frm"):
                accept_at = d["t"]
                slot = msg["slot"]
        elif msg.get("kind") == "Commit" and slot is not None and commit_seen_at is None:
            if d.get("to") == read_site and slot in msg["slots"]:
                commit_seen_at = d["t"]
    timeline = sorted(
        (r.response, r.response - r.invoke, r.contacted)
        for r in res.history
        if r.op == "get" and r.outcome == "ok" and r.site == read_site
    )
    write_rec = next((r for r in res.history if r.request_id == write_rid), None)
    return {
        "result": res,
        "timeline": timeline,
        "accept_at": accept_at,
        "commit_at_read_site": commit_seen_at,
        "write": write_rec,
    }
