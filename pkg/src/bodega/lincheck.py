"""Per-key linearizability checking over captured histories.

The workload is single-key reads/writes, so the global history decomposes
into independent register histories. The search is event-order backtracking
with memoized frontier states; `check_exhaustive` is the brute-force oracle
used to validate it on small inputs.

An operation with no response is possibly-effective: it may be linearized at
any point after its invocation or dropped entirely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations, permutations

INF = float("inf")


@dataclass(frozen=True, slots=True)
class HistOp:
    opid: int
    op: str  # "put" | "get"
    key: str
    value: str | None  # written value for puts, returned value for gets
    invoke: int
    response: int | None  # None = never returned (possibly effective)

    @property
    def resp(self) -> float:
        return INF if self.response is None else self.response

    @property
    def complete(self) -> bool:
        return self.response is not None


class HistoryError(ValueError):
    pass


def parse_history(rows: list[dict]) -> list[HistOp]:
    """Rows as produced by the simulator / bench: one dict per logical op."""
    by_rid: dict[str, dict] = {}
    for r in rows:
        rid = r.get("request_id", "")
        prev = by_rid.get(rid)
        if prev is None:
            by_rid[rid] = dict(r)
        else:
            # duplicated sends collapse: earliest invoke, earliest success
            prev["invoke"] = min(prev["invoke"], r["invoke"])
            if r.get("response") is not None and (
                prev.get("response") is None or r["response"] < prev["response"]
            ):
                prev["response"] = r["response"]
                prev["value"] = r.get("value")
                prev["outcome"] = r.get("outcome", "ok")
    ops = []
    for i, r in enumerate(by_rid.values()):
        invoke = r["invoke"]
        response = r.get("response")
        outcome = r.get("outcome", "ok")
        if outcome != "ok":
            response = None
        if response is not None and response < invoke:
            raise HistoryError(f"response before invoke in {r!r}")
        ops.append(HistOp(
            opid=i,
            op=r["op"],
            key=r["key"],
            value=r.get("value"),
            invoke=invoke,
            response=response,
        ))
    return ops


@dataclass(frozen=True, slots=True)
class Violation:
    key: str
    witness: tuple[HistOp, ...]

    def describe(self) -> str:
        lines = [f"key {self.key!r} has no legal linearization; minimal sub-history:"]
        for o in sorted(self.witness, key=lambda x: x.invoke):
            resp = "pending" if o.response is None else str(o.response)
            lines.append(
                f"  {o.op}({o.key}){'=' + repr(o.value) if o.value is not None else ''}"
                f" invoke={o.invoke} response={resp}"
            )
        return "\n".join(lines)


def check(rows: list[dict]) -> Violation | None:
    """None when linearizable; otherwise the first failing key's witness."""
    ops = parse_history(rows)
    per_key: dict[str, list[HistOp]] = {}
    for o in ops:
        per_key.setdefault(o.key, []).append(o)
    for key in sorted(per_key):
        if not _check_register(per_key[key]):
            return Violation(key, _minimize(per_key[key]))
    return None


class SearchBudgetExceeded(RuntimeError):
    pass


_STATE_BUDGET = 500_000


def _check_register(ops: list[HistOp]) -> bool:
    """Register linearizability via backtracking over the next linearized op.

    State: (frozenset of linearized op ids, current register value). An op is
    eligible next if no other un-linearized op responded before it was
    invoked. Incomplete reads constrain nothing and are dropped upfront;
    incomplete writes take effect only if the search chooses to linearize
    them (success requires linearizing exactly the complete ops).
    """
    ops = [o for o in ops if o.complete or o.op == "put"]
    by_id = {o.opid: o for o in ops}
    all_ids = frozenset(by_id)
    complete_ids = frozenset(o.opid for o in ops if o.complete)
    if not complete_ids:
        return True
    seen: set[tuple[frozenset, str | None]] = set()

    def eligible(done: frozenset) -> list[HistOp]:
        rest = [by_id[i] for i in all_ids - done]
        if not rest:
            return []
        min_resp = min(o.resp for o in rest)
        return [o for o in rest if o.invoke <= min_resp]

    def search(done: frozenset, value: str | None) -> bool:
        if complete_ids <= done:
            return True
        state = (done, value)
        if state in seen:
            return False
        if len(seen) > _STATE_BUDGET:
            raise SearchBudgetExceeded(f"{len(seen)} states explored")
        seen.add(state)
        for o in eligible(done):
            if o.op == "put":
                if search(done | {o.opid}, o.value):
                    return True
            else:
                if o.value != value:
                    continue
                if search(done | {o.opid}, value):
                    return True
        return False

    return search(frozenset(), None)


def _minimize(ops: list[HistOp]) -> tuple[HistOp, ...]:
    """Greedy shrink: drop reads and incomplete ops while the remainder still
    fails. Complete writes stay, so the witness keeps the values it mentions
    explainable."""
    if len(ops) > 24:
        return tuple(ops)
    cur = list(ops)
    changed = True
    while changed:
        changed = False
        for i in range(len(cur)):
            if cur[i].op == "put" and cur[i].complete:
                continue
            cand = cur[:i] + cur[i + 1 :]
            if cand and not _check_register(cand):
                cur = cand
                changed = True
                break
    return tuple(cur)


def check_exhaustive(ops: list[HistOp]) -> bool:
    """Oracle: try every permutation consistent with real-time order, with
    every subset choice for incomplete ops. Exponential; keep inputs tiny."""
    complete = [o for o in ops if o.complete]
    pending = [o for o in ops if not o.complete]
    for k in range(len(pending) + 1):
        for extra in combinations(pending, k):
            chosen = complete + [o for o in extra]
            if _any_legal_order(chosen):
                return True
    return False


def _any_legal_order(chosen: list[HistOp]) -> bool:
    if not chosen:
        return True
    for perm in permutations(chosen):
        ok = True
        # real-time: if a responded before b was invoked, a must precede b
        for i, a in enumerate(perm):
            for b in perm[i + 1 :]:
                if b.resp < a.invoke:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        value: str | None = None
        for o in perm:
            if o.op == "put":
                value = o.value
            elif o.complete and o.value != value:
                ok = False
                break
        if ok:
            return True
    return False


def check_file(path: str) -> Violation | None:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return check(rows)
