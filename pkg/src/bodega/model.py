"""Core domain types: ballots, rosters, commands, cluster parameters.

Keys and values are opaque byte strings ordered bytewise. All durations and
deadlines are integer microseconds on some node's local clock.
"""
from __future__ import annotations

from dataclasses import dataclass, field

NodeId = int

ZERO_BALLOT: "Ballot"


@dataclass(frozen=True, slots=True, order=True)
class Ballot:
    """Unique ordering token: (round, proposing node id), compared lexicographically.

    (0, 0) is the initial empty-roster epoch.
    """

    round: int
    node: NodeId

    def next(self, proposer: NodeId) -> "Ballot":
        return Ballot(self.round + 1, proposer)

    def to_wire(self) -> list[int]:
        return [self.round, self.node]

    @classmethod
    def from_wire(cls, v) -> "Ballot":
        return cls(int(v[0]), int(v[1]))


ZERO_BALLOT = Ballot(0, 0)


def next_ballot(current: Ballot, proposer: NodeId) -> Ballot:
    """Compose a strictly higher ballot owned by `proposer`."""
    return Ballot(current.round + 1, proposer)


@dataclass(frozen=True, slots=True)
class Command:
    """A Put or Get, tagged with a globally unique client request id."""

    kind: str  # "put" | "get"
    key: bytes
    value: bytes | None = None  # puts only
    request_id: str = ""

    def is_write(self) -> bool:
        return self.kind == "put"


@dataclass(frozen=True, slots=True)
class KeyRange:
    """Half-open key interval [lo, hi); hi=None means unbounded above."""

    lo: bytes
    hi: bytes | None

    def contains(self, key: bytes) -> bool:
        return self.lo <= key and (self.hi is None or key < self.hi)

    def overlaps(self, other: "KeyRange") -> bool:
        lo = max(self.lo, other.lo)
        if self.hi is None:
            return other.hi is None or other.hi > lo
        if other.hi is None:
            return self.hi > lo
        return min(self.hi, other.hi) > lo


@dataclass(frozen=True, slots=True)
class Roster:
    """Leader id plus per-key-range responder assignment.

    Ranges are disjoint and sorted by lo; the empty roster (no leader, no
    ranges) is the state of a fresh cluster.
    """

    leader: NodeId | None = None
    responder_map: tuple[tuple[KeyRange, frozenset[NodeId]], ...] = ()

    def responders_of(self, key: bytes) -> frozenset[NodeId]:
        return responders_of(self, key)

    def special_nodes(self) -> frozenset[NodeId]:
        """Nodes holding any role: the leader or a member of any responder set."""
        out: set[NodeId] = set()
        if self.leader is not None:
            out.add(self.leader)
        for _rng, nodes in self.responder_map:
            out |= nodes
        return frozenset(out)

    def without(self, peer: NodeId) -> "Roster":
        """Copy with `peer` unmarked from every responder set (leader untouched)."""
        new_map = tuple(
            (rng, nodes - {peer}) for rng, nodes in self.responder_map
        )
        return Roster(self.leader, new_map)

    def with_leader(self, leader: NodeId) -> "Roster":
        return Roster(leader, self.responder_map)

    def to_wire(self) -> dict:
        return {
            "leader": self.leader,
            "ranges": [
                {
                    "lo": rng.lo.decode("latin-1"),
                    "hi": None if rng.hi is None else rng.hi.decode("latin-1"),
                    "responders": sorted(nodes),
                }
                for rng, nodes in self.responder_map
            ],
        }

    @classmethod
    def from_wire(cls, v: dict) -> "Roster":
        ranges = []
        for r in v.get("ranges", []):
            rng = KeyRange(
                r["lo"].encode("latin-1"),
                None if r["hi"] is None else r["hi"].encode("latin-1"),
            )
            ranges.append((rng, frozenset(int(x) for x in r["responders"])))
        leader = v.get("leader")
        return cls(None if leader is None else int(leader), tuple(ranges))


EMPTY_ROSTER = Roster()


def full_range_roster(leader: NodeId, responders: set[NodeId] | frozenset[NodeId]) -> Roster:
    """Roster covering the whole keyspace with one responder set."""
    return Roster(leader, ((KeyRange(b"", None), frozenset(responders)),))


def responders_of(roster: Roster, key: bytes) -> frozenset[NodeId]:
    """All nodes expected to serve reads on `key` locally.

    Union of the responder sets of ranges containing the key, plus the leader
    when one is set; the empty roster yields the empty set.
    """
    out: set[NodeId] = set()
    for rng, nodes in roster.responder_map:
        if rng.lo > key:
            break
        if rng.contains(key):
            out |= nodes
    if roster.leader is not None:
        out.add(roster.leader)
    return frozenset(out)


@dataclass(frozen=True, slots=True)
class RosterViolation:
    field: str
    reason: str


def validate_roster(roster: Roster, n: int) -> RosterViolation | None:
    """Check roster invariants; returns the first violation found, or None."""
    if roster.leader is not None and not (0 <= roster.leader < n):
        return RosterViolation("leader", f"leader id {roster.leader} not in [0, {n})")
    prev: KeyRange | None = None
    for i, (rng, nodes) in enumerate(roster.responder_map):
        if rng.hi is not None and rng.lo >= rng.hi:
            return RosterViolation(f"ranges[{i}]", "lo must be < hi")
        if prev is not None:
            if rng.lo < prev.lo:
                return RosterViolation(f"ranges[{i}]", "ranges not sorted by lo")
            if prev.overlaps(rng):
                return RosterViolation(f"ranges[{i}]", "overlapping ranges")
        for node in nodes:
            if not (0 <= node < n):
                return RosterViolation(
                    f"ranges[{i}].responders", f"node id {node} not in [0, {n})"
                )
        prev = rng
    return None


@dataclass(slots=True)
class ClusterConfig:
    """Cluster sizing and timer durations (microseconds).

    Requires n odd >= 3 and t_hb_send < t_hb_fail < t_guard == t_lease.
    """

    n: int
    t_guard: int = 2_500_000
    t_lease: int = 2_500_000
    t_delta: int = 100_000
    t_hb_send: int = 120_000
    t_hb_fail: int = 1_200_000
    t_unhold: int = 50_000  # client-side floor; clients scale by observed RTT
    batch_interval: int = 1_000
    hb_fail_jitter: float = 0.25  # per-peer randomization of t_hb_fail
    snapshot_every: int = 0  # executed slots per snapshot; 0 disables
    early_accept_notes: bool = True
    tune_window: int = 5_000_000
    auto_tune: bool = False

    def __post_init__(self) -> None:
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"n must be odd and >= 3, got {self.n}")
        if not (self.t_hb_send < self.t_hb_fail < self.t_guard):
            raise ValueError(
                "timer rule violated: need t_hb_send < t_hb_fail < t_guard"
            )
        if self.t_guard != self.t_lease:
            raise ValueError("t_guard must equal t_lease")

    @property
    def majority(self) -> int:
        return (self.n + 1) // 2
