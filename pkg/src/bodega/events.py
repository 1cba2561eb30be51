"""Input events and output effects of the pure protocol core.

A node is driven exclusively through `Node.handle(event, now)` where `now` is
the node's local clock in microseconds; it returns a list of effects for the
host (simulator or daemon) to perform. The core never reads a clock or a
socket itself.
"""
from __future__ import annotations

from dataclasses import dataclass

from .messages import Msg
from .model import Command, Roster

# Timer keys are tuples: ("hb_tick",), ("hb_fail", peer), ("lease", intent, peer),
# ("batch",), ("tune",). Re-arming a key replaces the previous deadline.
TimerKey = tuple


@dataclass(frozen=True, slots=True)
class Event:
    pass


@dataclass(frozen=True, slots=True)
class Deliver(Event):
    frm: int
    msg: Msg


@dataclass(frozen=True, slots=True)
class TimerFire(Event):
    key: TimerKey


@dataclass(frozen=True, slots=True)
class ClientRequest(Event):
    client: str
    cmd: Command
    preferred: int = -1  # the client's preferred nearby server id
    want_roster: bool = False
    fresh: bool = True  # False on redirect-follows and reissues (stats dedup)


@dataclass(frozen=True, slots=True)
class OperatorRequest(Event):
    """Operator verbs: explicit roster change, roster/stats queries."""

    verb: str  # "roster_set" | "roster_get" | "stats"
    client: str = "op"
    roster: Roster | None = None


@dataclass(frozen=True, slots=True)
class Output:
    pass


@dataclass(frozen=True, slots=True)
class Send(Output):
    to: int
    msg: Msg


@dataclass(frozen=True, slots=True)
class Reply(Output):
    client: str
    msg: Msg


@dataclass(frozen=True, slots=True)
class ArmTimer(Output):
    key: TimerKey
    deadline: int  # absolute local-clock microseconds


@dataclass(frozen=True, slots=True)
class CancelTimer(Output):
    key: TimerKey
