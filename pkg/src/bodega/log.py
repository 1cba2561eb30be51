"""Replicated log: slot bookkeeping, in-order execution, and snapshots.

Slots are 1-based and contiguous. Status moves monotonically
Empty -> Accepted -> Committed -> Executed. A per-key index tracks which slots
wrote each key so reads can find the highest interfering write quickly.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import IntEnum

from .model import Ballot, Command, NodeId


class SlotStatus(IntEnum):
    EMPTY = 0
    ACCEPTED = 2
    COMMITTED = 3
    EXECUTED = 4


@dataclass(slots=True)
class LogSlot:
    index: int
    bal: Ballot
    batch: tuple[Command, ...]
    status: SlotStatus = SlotStatus.ACCEPTED
    accept_replies: set[NodeId] = field(default_factory=set)
    accept_notes: set[NodeId] = field(default_factory=set)
    # held local reads: (key, client, request_id, want_roster)
    pending_reads: list[tuple[bytes, str, str, bool]] = field(default_factory=list)

    def value_of(self, key: bytes) -> bytes | None:
        """Last value written to `key` within this batch, if any."""
        val: bytes | None = None
        found = False
        for cmd in self.batch:
            if cmd.is_write() and cmd.key == key:
                val = cmd.value
                found = True
        return val if found else None

    def writes_key(self, key: bytes) -> bool:
        return any(c.is_write() and c.key == key for c in self.batch)


@dataclass(slots=True)
class ConsensusLog:
    slots: dict[int, LogSlot] = field(default_factory=dict)
    commit_prefix: int = 0  # all slots <= this are committed
    exec_prefix: int = 0  # all slots <= this are executed
    highest_accepted: int = 0  # highest slot index ever accepted
    kv: dict[bytes, bytes] = field(default_factory=dict)
    key_index: dict[bytes, list[int]] = field(default_factory=dict)
    applied_ids: set[str] = field(default_factory=set)  # write dedup at execution
    # snapshot of everything executed up to snap_upto; slots <= snap_upto are gone
    snap_upto: int = 0
    snap_kv: dict[bytes, bytes] = field(default_factory=dict)

    # ----------------------------------------------------------- acceptance

    def record_accept(self, slot: int, bal: Ballot, batch: tuple[Command, ...]) -> LogSlot | None:
        """Store an accepted batch; returns the slot, or None when the slot is
        already committed (committed content is never overwritten)."""
        s = self.slots.get(slot)
        if s is not None and s.status >= SlotStatus.COMMITTED:
            return None
        if s is not None:
            self._unindex(s)
            s.bal = bal
            s.batch = batch
            s.status = SlotStatus.ACCEPTED
            s.accept_replies = set()
            s.accept_notes = set()
        else:
            s = LogSlot(slot, bal, batch)
            self.slots[slot] = s
        self._index(s)
        if slot > self.highest_accepted:
            self.highest_accepted = slot
        return s

    def _index(self, s: LogSlot) -> None:
        seen: set[bytes] = set()
        for cmd in s.batch:
            if cmd.is_write() and cmd.key not in seen:
                seen.add(cmd.key)
                lst = self.key_index.setdefault(cmd.key, [])
                bisect.insort(lst, s.index)

    def _unindex(self, s: LogSlot) -> None:
        seen: set[bytes] = set()
        for cmd in s.batch:
            if cmd.is_write() and cmd.key not in seen:
                seen.add(cmd.key)
                lst = self.key_index.get(cmd.key)
                if lst is not None:
                    i = bisect.bisect_left(lst, s.index)
                    if i < len(lst) and lst[i] == s.index:
                        del lst[i]

    # ----------------------------------------------------------- committing

    def mark_committed(self, slot: int) -> bool:
        """Mark one slot committed; returns True if the status changed."""
        s = self.slots.get(slot)
        if s is None or s.status >= SlotStatus.COMMITTED:
            return False
        s.status = SlotStatus.COMMITTED
        while True:
            nxt = self.slots.get(self.commit_prefix + 1)
            if nxt is None or nxt.status < SlotStatus.COMMITTED:
                break
            self.commit_prefix += 1
        return True

    def execute_ready(self) -> list[tuple[int, list[tuple[Command, bytes | None]]]]:
        """Execute the contiguous committed prefix in order.

        Returns, per newly executed slot, the commands applied with the value
        each produced (the read result for gets, the stored value for puts).
        Re-deliveries of an already applied request id are skipped.
        """
        done: list[tuple[int, list[tuple[Command, bytes | None]]]] = []
        while self.exec_prefix < self.commit_prefix:
            idx = self.exec_prefix + 1
            s = self.slots[idx]
            results: list[tuple[Command, bytes | None]] = []
            for cmd in s.batch:
                if cmd.request_id and cmd.request_id in self.applied_ids:
                    continue
                if cmd.request_id:
                    self.applied_ids.add(cmd.request_id)
                if cmd.is_write():
                    self.kv[cmd.key] = cmd.value or b""
                    results.append((cmd, cmd.value))
                else:
                    results.append((cmd, self.read_value(cmd.key)))
            s.status = SlotStatus.EXECUTED
            self.exec_prefix = idx
            done.append((idx, results))
        return done

    # ----------------------------------------------------------------- reads

    def read_value(self, key: bytes) -> bytes | None:
        """Value of `key` in the executed state (snapshot-backed)."""
        if key in self.kv:
            return self.kv[key]
        return self.snap_kv.get(key)

    def highest_write_slot(self, key: bytes) -> int:
        """Highest known slot writing `key`; 0 when only the snapshot (or
        nothing) covers it."""
        lst = self.key_index.get(key)
        if lst:
            return lst[-1]
        return 0

    def highest_committed_value(self, key: bytes) -> bytes | None:
        """Value from the highest committed slot writing `key`, else the
        snapshot, else None."""
        lst = self.key_index.get(key)
        if lst:
            for idx in reversed(lst):
                s = self.slots[idx]
                if s.status >= SlotStatus.COMMITTED:
                    return s.value_of(key)
        return self.snap_kv.get(key)

    # ------------------------------------------------------------- snapshots

    def take_snapshot(self) -> int:
        """Materialize the executed prefix and truncate the log below it.

        Returns the new truncation point (0 means nothing to snapshot).
        """
        if self.exec_prefix <= self.snap_upto:
            return self.snap_upto
        self.snap_kv = dict(self.snap_kv)
        self.snap_kv.update(self.kv)
        self.kv = {}
        self.snap_upto = self.exec_prefix
        for idx in [i for i in self.slots if i <= self.snap_upto]:
            self._unindex(self.slots[idx])
            del self.slots[idx]
        return self.snap_upto

    def install_snapshot(self, upto: int, kv: dict[bytes, bytes], applied: set[str]) -> None:
        """Adopt a peer's snapshot that is ahead of our executed state."""
        if upto <= self.exec_prefix:
            return
        self.snap_kv = dict(kv)
        self.kv = {}
        self.snap_upto = upto
        self.applied_ids |= applied
        self.commit_prefix = max(self.commit_prefix, upto)
        self.exec_prefix = upto
        for idx in [i for i in self.slots if i <= upto]:
            self._unindex(self.slots[idx])
            del self.slots[idx]
        self.highest_accepted = max(self.highest_accepted, upto)

    # ------------------------------------------------------------- step-up

    def accepted_tail(self, from_slot: int) -> tuple[tuple[int, Ballot, tuple[Command, ...], bool], ...]:
        """(slot, ballot, batch, committed?) for every known slot >= from_slot."""
        out = []
        for idx in sorted(i for i in self.slots if i >= from_slot):
            s = self.slots[idx]
            out.append((idx, s.bal, s.batch, s.status >= SlotStatus.COMMITTED))
        return tuple(out)

    def missing_below(self, upto: int) -> list[int]:
        """Slot indices <= upto that are not yet committed locally (candidates
        for commit marking or catch-up)."""
        lo = max(self.snap_upto, self.commit_prefix)
        return [
            i
            for i in range(lo + 1, upto + 1)
            if i not in self.slots or self.slots[i].status < SlotStatus.COMMITTED
        ]
