"""The protocol core of one replica.

A Node is a deterministic state machine driven through handle(event, now):
no clocks, sockets, or threads inside. The same core runs under the
discrete-event simulator and the networked daemon.

Broadcasts include the sender; self-addressed sends loop back through the
host's event queue, so self-leases and self-votes take the same code path as
everything else.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .control import FailureDetector, KeyStats, PeerRosterView, auto_tune_proposal
from .events import (
    ArmTimer,
    CancelTimer,
    ClientRequest,
    Deliver,
    Event,
    OperatorRequest,
    Output,
    Reply,
    Send,
    TimerFire,
)
from .leases import LeaseEngine
from .log import ConsensusLog, SlotStatus
from .messages import (
    Accept,
    AcceptNote,
    AcceptReply,
    CatchUpReply,
    CatchUpRequest,
    ClientReadReply,
    ClientRedirect,
    ClientUnavailable,
    ClientWriteReply,
    Commit,
    CtlReply,
    FullRosterRequest,
    Guard,
    GuardReply,
    Heartbeat,
    Msg,
    Prepare,
    PrepareReply,
    Renew,
    RenewReply,
    Revoke,
    RevokeReply,
    StatsReport,
    msg_to_wire,
)
from .model import (
    Ballot,
    ClusterConfig,
    Command,
    EMPTY_ROSTER,
    NodeId,
    Roster,
    ZERO_BALLOT,
    next_ballot,
    validate_roster,
)
from .reads import FallbackAsWrite, Hold, Redirect, ServeNow, notes_release_slot, read_decision

MAX_CATCHUP_BATCH = 64


@dataclass(slots=True)
class StepUp:
    bal: Ballot
    from_slot: int
    replies: dict[NodeId, tuple] = field(default_factory=dict)


class Node:
    def __init__(
        self,
        me: NodeId,
        cfg: ClusterConfig,
        seed: int = 0,
        mutations: frozenset[str] = frozenset(),
    ) -> None:
        self.me = me
        self.cfg = cfg
        self.mutations = mutations
        self.bal: Ballot = ZERO_BALLOT
        self.ros: Roster = EMPTY_ROSTER
        self.promised: Ballot = ZERO_BALLOT
        self.leases = LeaseEngine(me, cfg)
        self.log = ConsensusLog()
        self.fd = FailureDetector(me, cfg.n, cfg.t_hb_fail, cfg.hb_fail_jitter, seed)
        self.peer_view = PeerRosterView(cfg.n)
        self.stats = KeyStats()
        self.peer_stats: dict[NodeId, tuple] = {}
        # roster adoption in flight: target (ballot, roster); adopted once the
        # revocation of the current ballot's grants has fully drained
        self.pending_adoption: tuple[Ballot, Roster] | None = None
        self.stepup: StepUp | None = None
        self.leader_ready = False
        self.next_slot = 1
        self.open_batch: list[Command] = []
        self.batch_armed = False
        # request_id -> (client, want_roster) awaiting execution at this node
        self.pending_client_reqs: dict[str, tuple[str, bool]] = {}
        self.counters: dict[str, int] = {}
        self._resp_cache: dict[bytes, frozenset[NodeId]] = {}

    # ------------------------------------------------------------------ util

    def _count(self, what: str) -> None:
        self.counters[what] = self.counters.get(what, 0) + 1

    def _responders(self, key: bytes) -> frozenset[NodeId]:
        r = self._resp_cache.get(key)
        if r is None:
            r = self.ros.responders_of(key)
            self._resp_cache[key] = r
        return r

    def is_stable(self) -> bool:
        return self.leases.is_stable(
            self.log.commit_prefix, "stable_no_thresh" in self.mutations
        )

    def is_leader(self) -> bool:
        return self.ros.leader == self.me

    def state_digest(self) -> str:
        """Stable digest of protocol-visible state, for replay parity checks."""
        view = {
            "bal": self.bal.to_wire(),
            "ros": self.ros.to_wire(),
            "commit_prefix": self.log.commit_prefix,
            "exec_prefix": self.log.exec_prefix,
            "kv": sorted(
                (k.decode("latin-1"), v.decode("latin-1"))
                for k, v in {**self.log.snap_kv, **self.log.kv}.items()
            ),
            "slots": [
                [
                    i,
                    self.log.slots[i].bal.to_wire(),
                    int(self.log.slots[i].status),
                    [msg_to_wire_cmd(c) for c in self.log.slots[i].batch],
                ]
                for i in sorted(self.log.slots)
            ],
            "endowed": sorted(self.leases.endowed),
            "thresh": sorted(self.leases.thresh.items()),
        }
        blob = json.dumps(view, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # ------------------------------------------------------------- lifecycle

    def start(self, now: int) -> list[Output]:
        out: list[Output] = [ArmTimer(("hb_tick",), now + self.cfg.t_hb_send)]
        for p in range(self.cfg.n):
            if p != self.me:
                out.append(ArmTimer(("hb_fail", p), self.fd.refresh(p, now)))
        if self.cfg.auto_tune:
            out.append(ArmTimer(("tune",), now + self.cfg.tune_window))
            self.stats.reset(now)
        return out

    # -------------------------------------------------------------- dispatch

    def handle(self, event: Event, now: int) -> list[Output]:
        if isinstance(event, Deliver):
            return self._on_msg(event.frm, event.msg, now)
        if isinstance(event, TimerFire):
            return self._on_timer(event.key, now)
        if isinstance(event, ClientRequest):
            return self._on_client(event, now)
        if isinstance(event, OperatorRequest):
            return self._on_operator(event, now)
        raise TypeError(f"unhandled event: {event!r}")

    def _on_msg(self, frm: NodeId, msg: Msg, now: int) -> list[Output]:
        if isinstance(msg, Heartbeat):
            return self._on_heartbeat(frm, msg, now)
        if isinstance(msg, Guard):
            return self.leases.on_guard(frm, msg.bal, msg.thresh, self.bal, now)
        if isinstance(msg, GuardReply):
            return self.leases.on_guard_reply(frm, msg.bal, self.bal, now)
        if isinstance(msg, Renew):
            return self.leases.on_renew(frm, msg.bal, self.bal, now)
        if isinstance(msg, RenewReply):
            return self.leases.on_renew_reply(frm, msg.bal, self.bal, now)
        if isinstance(msg, Revoke):
            return self.leases.on_revoke(frm, msg.bal, self.bal)
        if isinstance(msg, RevokeReply):
            out = self.leases.on_revoke_reply(frm, msg.bal)
            return out + self._maybe_adopt(now)
        if isinstance(msg, Accept):
            return self._on_accept(frm, msg, now)
        if isinstance(msg, AcceptReply):
            return self._on_accept_reply(frm, msg, now)
        if isinstance(msg, AcceptNote):
            return self._on_accept_note(frm, msg, now)
        if isinstance(msg, Commit):
            return self._on_commit(frm, msg, now)
        if isinstance(msg, Prepare):
            return self._on_prepare(frm, msg, now)
        if isinstance(msg, PrepareReply):
            return self._on_prepare_reply(frm, msg, now)
        if isinstance(msg, CatchUpRequest):
            return self._on_catchup_request(frm, msg)
        if isinstance(msg, CatchUpReply):
            return self._on_catchup_reply(frm, msg, now)
        if isinstance(msg, FullRosterRequest):
            return self._on_full_roster_request(frm, msg)
        if isinstance(msg, StatsReport):
            self.peer_stats[frm] = msg.rows
            return []
        return []

    def _on_timer(self, key: tuple, now: int) -> list[Output]:
        kind = key[0]
        if kind == "hb_tick":
            return self._heartbeat_tick(now)
        if kind == "hb_fail":
            return self._on_peer_failure(key[1], now)
        if kind == "lease":
            return self._on_lease_timer(key[1], key[2], now)
        if kind == "batch":
            self.batch_armed = False
            return self._seal_batch(now)
        if kind == "tune":
            return self._tune_tick(now)
        return []

    # ----------------------------------------------------- roster / ballots

    def announce_roster(self, new_ros: Roster, now: int) -> tuple[Ballot, list[Output]]:
        base = max(self.bal, self.promised)
        if self.pending_adoption is not None:
            base = max(base, self.pending_adoption[0])
        new_bal = next_ballot(base, self.me)
        hb = Heartbeat(new_bal, new_ros, commit_upto=self.log.commit_prefix)
        out: list[Output] = [Send(p, hb) for p in range(self.cfg.n)]
        self._count("roster_announced")
        return new_bal, out

    def _on_heartbeat(self, frm: NodeId, msg: Heartbeat, now: int) -> list[Output]:
        out: list[Output] = []
        if frm != self.me:
            out.append(ArmTimer(("hb_fail", frm), self.fd.refresh(frm, now)))
        self.peer_view.saw(frm, msg.bal)
        if msg.bal > self.promised:
            self.promised = msg.bal
        pending_bal = self.pending_adoption[0] if self.pending_adoption else self.bal
        if msg.bal > self.bal and msg.bal >= pending_bal:
            if msg.roster is None:
                if msg.bal > pending_bal:
                    out.append(Send(frm, FullRosterRequest(msg.bal)))
            else:
                self.pending_adoption = (msg.bal, msg.roster)
                if self.leases.revoking != self.bal:
                    out += self.leases.start_revocation(self.bal, now)
                out += self._maybe_adopt(now)
        # commit propagation: the sender's committed prefix rides every beat
        if msg.commit_upto > self.log.commit_prefix:
            out += self._absorb_commits(frm, msg.bal, msg.commit_upto, now)
        if msg.renew:
            out += self.leases.on_renew(frm, msg.bal, self.bal, now)
        if msg.renew_reply:
            out += self.leases.on_renew_reply(frm, msg.bal, self.bal, now)
        return out

    def _maybe_adopt(self, now: int) -> list[Output]:
        if self.pending_adoption is None:
            return []
        if self.bal != ZERO_BALLOT and not self.leases.revocation_complete():
            return []
        new_bal, new_ros = self.pending_adoption
        self.pending_adoption = None
        out: list[Output] = self.leases.reset_for_new_ballot()
        self.bal = new_bal
        self.ros = new_ros
        self._resp_cache = {}
        if self.promised < new_bal:
            self.promised = new_bal
        self.leader_ready = False
        self.stepup = None
        self._count("roster_adopted")
        out += self.leases.initiate(new_bal, self.log.highest_accepted, now)
        out += self._redispatch_pending(now)
        if self.is_leader():
            out += self._begin_stepup(now)
        else:
            out += self._drain_batch_as_redirects()
        return out

    def _drain_batch_as_redirects(self) -> list[Output]:
        out: list[Output] = []
        for cmd in self.open_batch:
            entry = self.pending_client_reqs.pop(cmd.request_id, None)
            if entry is None:
                continue
            client, _want = entry
            if self.ros.leader is not None:
                out.append(Reply(client, ClientRedirect(
                    cmd.request_id, self.ros.leader, self.bal, self.ros)))
            else:
                out.append(Reply(client, ClientUnavailable(cmd.request_id)))
        self.open_batch = []
        return out

    def _on_full_roster_request(self, frm: NodeId, msg: FullRosterRequest) -> list[Output]:
        if self.bal >= msg.bal and self.bal != ZERO_BALLOT:
            return [Send(frm, Heartbeat(self.bal, self.ros, commit_upto=self.log.commit_prefix))]
        return []

    def _on_lease_timer(self, intent: str, peer: NodeId, now: int) -> list[Output]:
        live = self.leases.on_timer(intent, peer)
        out: list[Output] = []
        if not live:
            return out
        if intent == "guarding" and self.leases.revoking is None and self.bal != ZERO_BALLOT:
            out += self.leases.reguard(self.bal, peer, self.log.highest_accepted, now)
        elif intent == "endowing":
            if self.leases.revoking is not None:
                out += self._maybe_adopt(now)
            elif self.bal != ZERO_BALLOT:
                out += self.leases.reguard(self.bal, peer, self.log.highest_accepted, now)
        return out

    def _on_peer_failure(self, peer: NodeId, now: int) -> list[Output]:
        if not self.fd.expire(peer):
            return []
        self._count("peer_down")
        if peer not in self.ros.special_nodes():
            return []
        new_ros = self.ros.without(peer)
        if self.ros.leader == peer:
            healthy = [p for p in self.fd.healthy() if p != peer]
            new_ros = new_ros.with_leader(min(healthy) if healthy else self.me)
        _bal, out = self.announce_roster(new_ros, now)
        return out

    # -------------------------------------------------------------- heartbeat

    def _heartbeat_tick(self, now: int) -> list[Output]:
        renews, replies, out = self.leases.heartbeat_piggyback(now)
        commit_upto = self.log.commit_prefix
        for p in range(self.cfg.n):
            full = p != self.me and self.peer_view.needs_full(p, self.bal)
            out.append(Send(p, Heartbeat(
                self.bal,
                self.ros if full else None,
                renew=renews.get(p, False),
                renew_reply=replies.get(p, False),
                commit_upto=commit_upto,
            )))
        out += self.leases.revoke_retransmit()
        out += self._retransmit_consensus()
        out.append(ArmTimer(("hb_tick",), now + self.cfg.t_hb_send))
        return out

    def _retransmit_consensus(self) -> list[Output]:
        out: list[Output] = []
        if self.stepup is not None:
            msg = Prepare(self.stepup.bal, self.stepup.from_slot)
            for p in range(self.cfg.n):
                if p not in self.stepup.replies and p not in self.fd.down:
                    out.append(Send(p, msg))
        elif self.leader_ready and self.is_leader():
            for idx in range(self.log.commit_prefix + 1, self.next_slot):
                s = self.log.slots.get(idx)
                if s is None or s.bal != self.bal or s.status >= SlotStatus.COMMITTED:
                    continue
                msg = Accept(self.bal, idx, s.batch)
                for p in range(self.cfg.n):
                    if p != self.me and p not in s.accept_replies and p not in self.fd.down:
                        out.append(Send(p, msg))
        return out

    # ------------------------------------------------------------ write path

    def _on_client(self, req: ClientRequest, now: int) -> list[Output]:
        if req.cmd.is_write():
            return self._on_client_write(req, now)
        return self._on_client_read(req, now)

    def _on_client_write(self, req: ClientRequest, now: int) -> list[Output]:
        rid = req.cmd.request_id
        if self.ros.leader is None:
            return [Reply(req.client, ClientUnavailable(rid))]
        if not self.is_leader():
            return [Reply(req.client, ClientRedirect(rid, self.ros.leader, self.bal, self.ros))]
        if req.fresh and req.preferred >= 0:
            self.stats.record(req.cmd.key, req.preferred, True)
        if rid in self.log.applied_ids:
            return [Reply(req.client, ClientWriteReply(
                rid, self.bal, self.ros if req.want_roster else None))]
        already_queued = rid in self.pending_client_reqs
        self.pending_client_reqs[rid] = (req.client, req.want_roster)
        if already_queued:
            return []
        self.open_batch.append(req.cmd)
        return self._arm_batch(now)

    def _arm_batch(self, now: int) -> list[Output]:
        if self.batch_armed or not self.open_batch or not self.leader_ready:
            return []
        self.batch_armed = True
        return [ArmTimer(("batch",), now + self.cfg.batch_interval)]

    def _seal_batch(self, now: int) -> list[Output]:
        if not self.open_batch or not self.leader_ready or not self.is_leader():
            return []
        batch = tuple(self.open_batch)
        self.open_batch = []
        slot = self.next_slot
        self.next_slot += 1
        self._count("proposals")
        msg = Accept(self.bal, slot, batch)
        return [Send(p, msg) for p in range(self.cfg.n)]

    def _on_accept(self, frm: NodeId, msg: Accept, now: int) -> list[Output]:
        if msg.bal < self.promised:
            return [Send(frm, AcceptReply(msg.bal, msg.slot, higher=self.promised))]
        self.promised = msg.bal
        out: list[Output] = []
        s = self.log.record_accept(msg.slot, msg.bal, msg.batch)
        if s is not None:
            s.accept_notes.add(self.me)
            if self.cfg.early_accept_notes:
                targets: set[NodeId] = set()
                seen: set[bytes] = set()
                for cmd in msg.batch:
                    if cmd.is_write() and cmd.key not in seen:
                        seen.add(cmd.key)
                        targets |= self._responders(cmd.key)
                targets.discard(frm)
                targets.discard(self.me)
                note = AcceptNote(msg.bal, msg.slot)
                for p in sorted(targets):
                    out.append(Send(p, note))
        out.append(Send(frm, AcceptReply(msg.bal, msg.slot)))
        return out

    def _commit_ok(self, s) -> bool:
        if len(s.accept_replies) < self.cfg.majority:
            return False
        if "commit_no_responder_coverage" in self.mutations:
            return True
        seen: set[bytes] = set()
        for cmd in s.batch:
            if cmd.is_write() and cmd.key not in seen:
                seen.add(cmd.key)
                if not self._responders(cmd.key) <= s.accept_replies:
                    return False
        return True

    def _on_accept_reply(self, frm: NodeId, msg: AcceptReply, now: int) -> list[Output]:
        if msg.higher is not None:
            if msg.higher > self.promised:
                self.promised = msg.higher
            self.stepup = None  # a competing higher ballot: stand down
            self.leader_ready = False
            return []
        s = self.log.slots.get(msg.slot)
        if s is None or s.bal != msg.bal or s.status >= SlotStatus.COMMITTED:
            return []
        s.accept_replies.add(frm)
        if not self._commit_ok(s):
            return []
        out = self._release_pending(s)
        self.log.mark_committed(msg.slot)
        self._count("commits")
        cm = Commit(msg.bal, (msg.slot,))
        for p in range(self.cfg.n):
            if p != self.me:
                out.append(Send(p, cm))
        out += self._execute(now)
        return out

    def _on_accept_note(self, frm: NodeId, msg: AcceptNote, now: int) -> list[Output]:
        s = self.log.slots.get(msg.slot)
        if s is None or s.bal != msg.bal or s.status >= SlotStatus.COMMITTED:
            return []
        s.accept_notes.add(frm)
        if len(s.accept_notes) >= self.cfg.majority:
            return self._release_by_notes(s)
        return []

    def _release_by_notes(self, s) -> list[Output]:
        """Release the held reads whose keys pass the note-coverage test; the
        rest stay parked until commit."""
        if not s.pending_reads:
            return []
        out: list[Output] = []
        keep = []
        for key, client, rid, want in s.pending_reads:
            if notes_release_slot(s, key, self.bal, self.ros, self.cfg.majority):
                self._count("reads_released")
                out.append(Reply(client, ClientReadReply(
                    rid, s.value_of(key), self.bal, self.ros if want else None)))
            else:
                keep.append((key, client, rid, want))
        s.pending_reads = keep
        return out

    def _on_commit(self, frm: NodeId, msg: Commit, now: int) -> list[Output]:
        out: list[Output] = []
        missing: list[int] = []
        for idx in msg.slots:
            if idx <= self.log.snap_upto:
                continue
            s = self.log.slots.get(idx)
            if s is None or (s.bal < msg.bal and s.status < SlotStatus.COMMITTED):
                missing.append(idx)
                continue
            if s.status < SlotStatus.COMMITTED:
                out += self._release_pending(s)
                self.log.mark_committed(idx)
        if missing:
            out.append(Send(frm, CatchUpRequest(tuple(missing[:MAX_CATCHUP_BATCH]))))
        out += self._execute(now)
        return out

    def _absorb_commits(self, frm: NodeId, bal: Ballot, upto: int, now: int) -> list[Output]:
        out: list[Output] = []
        missing: list[int] = []
        for idx in self.log.missing_below(upto):
            s = self.log.slots.get(idx)
            if s is not None and s.bal >= bal:
                out += self._release_pending(s)
                self.log.mark_committed(idx)
            else:
                missing.append(idx)
        if missing:
            out.append(Send(frm, CatchUpRequest(tuple(missing[:MAX_CATCHUP_BATCH]))))
        out += self._execute(now)
        return out

    def _on_catchup_request(self, frm: NodeId, msg: CatchUpRequest) -> list[Output]:
        entries = []
        want_snap = False
        for idx in msg.slots:
            if idx <= self.log.snap_upto:
                want_snap = True
                continue
            s = self.log.slots.get(idx)
            if s is not None:
                entries.append((idx, s.bal, s.batch, s.status >= SlotStatus.COMMITTED))
        reply = CatchUpReply(
            tuple(entries),
            snap_upto=self.log.snap_upto if want_snap else 0,
            snap_kv=tuple(sorted(self.log.snap_kv.items())) if want_snap else (),
            snap_applied=tuple(sorted(self.log.applied_ids)) if want_snap else (),
        )
        return [Send(frm, reply)]

    def _on_catchup_reply(self, frm: NodeId, msg: CatchUpReply, now: int) -> list[Output]:
        out: list[Output] = []
        if msg.snap_upto > self.log.exec_prefix:
            self.log.install_snapshot(
                msg.snap_upto, dict(msg.snap_kv), set(msg.snap_applied)
            )
        for idx, bal, batch, committed in msg.entries:
            s = self.log.slots.get(idx)
            if s is not None and s.status >= SlotStatus.COMMITTED:
                continue
            if s is not None and s.bal > bal and not committed:
                continue
            s = self.log.record_accept(idx, bal, batch)
            if committed and s is not None:
                out += self._release_pending(s)
                self.log.mark_committed(idx)
        out += self._execute(now)
        return out

    def _execute(self, now: int) -> list[Output]:
        out: list[Output] = []
        for _idx, results in self.log.execute_ready():
            for cmd, value in results:
                entry = self.pending_client_reqs.pop(cmd.request_id, None)
                if entry is None:
                    continue
                client, want = entry
                ros = self.ros if want else None
                if cmd.is_write():
                    out.append(Reply(client, ClientWriteReply(cmd.request_id, self.bal, ros)))
                else:
                    out.append(Reply(client, ClientReadReply(cmd.request_id, value, self.bal, ros)))
        if (
            self.cfg.snapshot_every
            and self.log.exec_prefix - self.log.snap_upto >= self.cfg.snapshot_every
        ):
            self.log.take_snapshot()
            self._count("snapshots")
        return out

    # --------------------------------------------------------------- step-up

    def _begin_stepup(self, now: int) -> list[Output]:
        self.stepup = StepUp(self.bal, self.log.commit_prefix + 1)
        self._count("stepups")
        msg = Prepare(self.bal, self.stepup.from_slot)
        return [Send(p, msg) for p in range(self.cfg.n)]

    def _on_prepare(self, frm: NodeId, msg: Prepare, now: int) -> list[Output]:
        if msg.bal < self.promised:
            return [Send(frm, PrepareReply(msg.bal, higher=self.promised))]
        self.promised = msg.bal
        return [Send(frm, PrepareReply(msg.bal, self.log.accepted_tail(msg.from_slot)))]

    def _on_prepare_reply(self, frm: NodeId, msg: PrepareReply, now: int) -> list[Output]:
        if self.stepup is None or msg.bal != self.stepup.bal:
            return []
        if msg.higher is not None:
            if msg.higher > self.promised:
                self.promised = msg.higher
            self.stepup = None
            return []
        self.stepup.replies[frm] = msg.tail
        if len(self.stepup.replies) < self.cfg.majority:
            return []
        return self._finish_stepup(now)

    def _finish_stepup(self, now: int) -> list[Output]:
        assert self.stepup is not None
        from_slot = self.stepup.from_slot
        best: dict[int, tuple[Ballot, tuple[Command, ...], bool]] = {}
        for tail in self.stepup.replies.values():
            for idx, bal, batch, committed in tail:
                cur = best.get(idx)
                if committed:
                    best[idx] = (bal, batch, True)
                elif cur is None or (not cur[2] and bal > cur[0]):
                    best[idx] = (bal, batch, False)
        self.stepup = None
        out: list[Output] = []
        top = max(best) if best else from_slot - 1
        for idx in range(from_slot, top + 1):
            entry = best.get(idx)
            if entry is not None and entry[2]:
                s = self.log.slots.get(idx)
                if s is None or s.status < SlotStatus.COMMITTED:
                    s = self.log.record_accept(idx, entry[0], entry[1])
                    if s is not None:
                        out += self._release_pending(s)
                        self.log.mark_committed(idx)
                continue
            batch = entry[1] if entry is not None else ()
            msg = Accept(self.bal, idx, batch)
            out += [Send(p, msg) for p in range(self.cfg.n)]
        self.next_slot = top + 1
        self.leader_ready = True
        out += self._execute(now)
        out += self._arm_batch(now)
        return out

    # -------------------------------------------------------------- read path

    def _on_client_read(self, req: ClientRequest, now: int) -> list[Output]:
        if req.fresh and req.preferred >= 0:
            self.stats.record(req.cmd.key, req.preferred, False)
        return self._dispatch_read(req.cmd.key, req.client, req.cmd.request_id,
                                   req.want_roster, now)

    def _dispatch_read(self, key: bytes, client: str, rid: str,
                       want_roster: bool, now: int) -> list[Output]:
        decision = read_decision(
            self.me, key, self.ros, self.is_stable(), self.bal, self.log,
            self.cfg.majority, self.cfg.early_accept_notes,
        )
        if isinstance(decision, ServeNow):
            self._count("reads_local")
            ros = self.ros if want_roster else None
            return [Reply(client, ClientReadReply(rid, decision.value, self.bal, ros))]
        if isinstance(decision, Hold):
            self._count("reads_held")
            self.log.slots[decision.slot].pending_reads.append((key, client, rid, want_roster))
            return []
        if isinstance(decision, Redirect):
            self._count("reads_redirected")
            return [Reply(client, ClientRedirect(rid, decision.target, self.bal, self.ros))]
        # fallback through the log as if it were a write
        if not self.is_leader():
            return [Reply(client, ClientUnavailable(rid))]
        self._count("reads_fallback")
        if rid in self.log.applied_ids:
            # retried read already executed once; serve its stable outcome
            return [Reply(client, ClientReadReply(
                rid, self.log.read_value(key), self.bal,
                self.ros if want_roster else None))]
        already = rid in self.pending_client_reqs
        self.pending_client_reqs[rid] = (client, want_roster)
        if already:
            return []
        self.open_batch.append(Command("get", key, None, rid))
        return self._arm_batch(now)

    def _release_pending(self, s) -> list[Output]:
        """Answer every read held on `s` with the slot's value for its key."""
        if not s.pending_reads:
            return []
        out: list[Output] = []
        held = s.pending_reads
        s.pending_reads = []
        for key, client, rid, want in held:
            value = s.value_of(key)
            self._count("reads_released")
            out.append(Reply(client, ClientReadReply(
                rid, value, self.bal, self.ros if want else None)))
        return out

    def _redispatch_pending(self, now: int) -> list[Output]:
        """After a ballot change, every held read goes through dispatch again;
        its slot may have been superseded by the step-up."""
        out: list[Output] = []
        for s in list(self.log.slots.values()):
            if not s.pending_reads:
                continue
            held = s.pending_reads
            s.pending_reads = []
            for key, client, rid, want in held:
                out += self._dispatch_read(key, client, rid, want, now)
        return out

    # ------------------------------------------------------------- operator

    def _on_operator(self, req: OperatorRequest, now: int) -> list[Output]:
        if req.verb == "roster_get":
            return [Reply(req.client, CtlReply(True, bal=self.bal, roster=self.ros))]
        if req.verb == "stats":
            merged = KeyStats()
            merged.merge_rows(self.stats.rows())
            for rows in self.peer_stats.values():
                merged.merge_rows(rows)
            return [Reply(req.client, CtlReply(True, bal=self.bal, rows=merged.rows()))]
        if req.verb == "roster_set":
            if req.roster is None:
                return [Reply(req.client, CtlReply(False, "missing roster"))]
            bad = validate_roster(req.roster, self.cfg.n)
            if bad is not None:
                return [Reply(req.client, CtlReply(False, f"{bad.field}: {bad.reason}"))]
            new_bal, out = self.announce_roster(req.roster, now)
            out.append(Reply(req.client, CtlReply(True, bal=new_bal, roster=req.roster)))
            return out
        return [Reply(req.client, CtlReply(False, f"unknown verb {req.verb!r}"))]

    def _tune_tick(self, now: int) -> list[Output]:
        out: list[Output] = []
        if self.is_leader():
            merged = KeyStats()
            merged.merge_rows(self.stats.rows())
            for rows in self.peer_stats.values():
                merged.merge_rows(rows)
            proposal = auto_tune_proposal(merged, self.ros)
            if proposal is not None:
                _bal, more = self.announce_roster(proposal, now)
                out += more
            self.peer_stats.clear()
        elif self.ros.leader is not None and self.stats.counts:
            out.append(Send(self.ros.leader, StatsReport(self.stats.rows())))
        self.stats.reset(now)
        out.append(ArmTimer(("tune",), now + self.cfg.tune_window))
        return out


def msg_to_wire_cmd(c: Command) -> list:
    return [c.kind, c.key.decode("latin-1"),
            "" if c.value is None else c.value.decode("latin-1"), c.request_id]
