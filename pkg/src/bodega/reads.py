"""Read path: three-way dispatch gated by the stable-roster check, optimistic
holding, and the client-side retry/unhold session.

The decision function is pure over (roster, lease stability, log); the node
turns decisions into replies, pending-set entries, or a fallback proposal
through the log.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .log import ConsensusLog, SlotStatus
from .model import Ballot, NodeId, Roster


@dataclass(frozen=True, slots=True)
class ServeNow:
    value: bytes | None


@dataclass(frozen=True, slots=True)
class Hold:
    slot: int


@dataclass(frozen=True, slots=True)
class Redirect:
    target: NodeId


@dataclass(frozen=True, slots=True)
class FallbackAsWrite:
    pass


ReadDecision = ServeNow | Hold | Redirect | FallbackAsWrite


def notes_release_slot(s, key: bytes, bal: Ballot, roster: Roster, majority: int) -> bool:
    """Early-release test for an uncommitted slot.

    m notes prove the value is chosen, but serving it is only monotone once
    every node that could anchor a later read below this slot provably has
    it: the key's non-leader responders must all appear among the notes (the
    leader proposed the slot and anchors to it by construction).
    """
    if s.bal != bal or len(s.accept_notes) < majority:
        return False
    need = roster.responders_of(key)
    if roster.leader is not None:
        need = need - {roster.leader}
    return need <= s.accept_notes


def read_decision(
    me: NodeId,
    key: bytes,
    roster: Roster,
    stable: bool,
    bal: Ballot,
    log: ConsensusLog,
    majority: int,
    early_notes: bool = True,
) -> ReadDecision:
    """Dispatch one client read at this node."""
    is_leader = roster.leader == me
    if not stable or me not in roster.responders_of(key):
        if is_leader:
            return FallbackAsWrite()
        if roster.leader is not None:
            return Redirect(roster.leader)
        return FallbackAsWrite()  # empty roster: no better target exists
    return responder_read(key, bal, log, roster, majority, early_notes)


def responder_read(
    key: bytes,
    bal: Ballot,
    log: ConsensusLog,
    roster: Roster,
    majority: int,
    early_notes: bool = True,
) -> ReadDecision:
    """Stable responder (the leader included): serve from the highest
    interfering write, holding while its fate or visibility is uncertain.

    Anchoring the leader at its highest accepted slot (rather than its
    committed prefix) keeps leader reads ordered after any value a responder
    already served early off accept notes.
    """
    idx = log.highest_write_slot(key)
    if idx == 0:
        return ServeNow(log.snap_kv.get(key))
    s = log.slots[idx]
    if s.status >= SlotStatus.COMMITTED:
        return ServeNow(s.value_of(key))
    if early_notes and notes_release_slot(s, key, bal, roster, majority):
        return ServeNow(s.value_of(key))
    return Hold(idx)


# --------------------------------------------------------------------------
# client session: one logical op at a time, with redirect-following and the
# unhold reissue. Pure core driven by the host (simulator or socket client).
# --------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ClientSend:
    target: NodeId
    fresh: bool


@dataclass(frozen=True, slots=True)
class ClientArm:
    deadline: int


@dataclass(frozen=True, slots=True)
class ClientDone:
    outcome: str  # "ok" | "timeout" | "redirected"
    value: bytes | None


@dataclass(slots=True)
class ClientCache:
    """Roster hint and leader RTT estimate shared by a client's sessions."""

    site: NodeId
    n: int
    unhold_floor: int = 50_000
    roster: Roster | None = None
    bal: Ballot | None = None
    roster_stale: bool = False  # a newer ballot was seen without its roster
    leader_rtt: int = 0  # latest observed leader round trip

    def learn(self, bal: Ballot | None, roster: Roster | None) -> None:
        if bal is not None and (self.bal is None or bal > self.bal):
            self.bal = bal
            if roster is not None:
                self.roster = roster
                self.roster_stale = False
            else:
                self.roster_stale = True
        elif roster is not None and bal == self.bal and self.roster_stale:
            self.roster = roster
            self.roster_stale = False

    def wants_roster(self) -> bool:
        return self.roster is None or self.roster_stale

    def preference_order(self, key: bytes) -> list[NodeId]:
        """Own site first, then the cached roster's responders, then the
        cached leader, then everyone else."""
        order: list[NodeId] = [self.site]
        if self.roster is not None:
            for p in sorted(self.roster.responders_of(key)):
                if p not in order:
                    order.append(p)
            if self.roster.leader is not None and self.roster.leader not in order:
                order.append(self.roster.leader)
        for p in range(self.n):
            if p not in order:
                order.append(p)
        return order

    def write_target(self) -> NodeId:
        if self.roster is not None and self.roster.leader is not None:
            return self.roster.leader
        return self.site

    def unhold_after(self, now: int) -> int:
        return now + max(self.unhold_floor, 2 * self.leader_rtt)


@dataclass(slots=True)
class ClientSession:
    """Retry state for one in-flight operation.

    Reads reissue with the same request id after the unhold timeout; writes
    re-send to the (possibly redirected) leader. The earliest reply wins and
    later duplicates are ignored.
    """

    cache: ClientCache
    request_id: str
    key: bytes
    is_write: bool
    started: int
    patience: int = 30_000_000  # give up entirely after this long
    contacted: list[NodeId] = field(default_factory=list)
    redirects: int = 0
    done: bool = False

    def begin(self) -> list:
        target = (
            self.cache.write_target()
            if self.is_write
            else self.cache.preference_order(self.key)[0]
        )
        self.contacted.append(target)
        return [ClientSend(target, True), ClientArm(self.cache.unhold_after(self.started))]

    def _next_target(self) -> NodeId | None:
        for c in self.cache.preference_order(self.key):
            if c not in self.contacted:
                return c
        return None

    def on_timer(self, now: int) -> list:
        """Unhold/progress timer: reissue the same request.

        Writes prefer the cached leader (request-id dedup makes re-sends
        harmless); both kinds rotate through the other nodes when the target
        stays silent, which also rediscovers a moved leader.
        """
        if self.done:
            return []
        if now - self.started >= self.patience:
            self.done = True
            return [ClientDone("timeout", None)]
        nxt: NodeId | None = None
        if self.is_write:
            t = self.cache.write_target()
            if t not in self.contacted:
                nxt = t
        if nxt is None:
            nxt = self._next_target()
        if nxt is None:
            self.contacted = [self.contacted[-1]]
            nxt = self._next_target()
        out = []
        if nxt is not None:
            self.contacted.append(nxt)
            out.append(ClientSend(nxt, False))
        out.append(ClientArm(self.cache.unhold_after(now)))
        return out

    def on_reply(self, kind: str, value: bytes | None, target: NodeId | None,
                 bal: Ballot | None, roster: Roster | None, now: int) -> list:
        """kind: "read" | "write" | "redirect" | "unavailable"."""
        self.cache.learn(bal, roster)
        if self.done:
            return []
        if kind in ("read", "write"):
            self.done = True
            if self.is_write and self.cache.roster is not None and self.contacted:
                if self.contacted[-1] == self.cache.roster.leader:
                    self.cache.leader_rtt = now - self.started
            return [ClientDone("ok", value)]
        if kind == "redirect" and target is not None:
            self.redirects += 1
            if self.redirects > 2 * self.cache.n:
                self.done = True
                return [ClientDone("redirected", None)]
            if target in self.contacted:
                # wait for the timer rather than hammering the same nodes
                return []
            self.contacted.append(target)
            return [ClientSend(target, False), ClientArm(self.cache.unhold_after(now))]
        return []  # unavailable: retry on the timer
