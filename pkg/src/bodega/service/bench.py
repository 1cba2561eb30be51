"""Workload driver against a live cluster: closed- or open-loop clients,
per-client latency samples (CSV), a JSON summary, and a history file the
linearizability checker can consume."""
from __future__ import annotations

import asyncio
import csv
import json
import random
import time

from .client import KvClient, mono_us
from .config import WorkloadSpec


def _zipf_cdf(n: int, theta: float) -> list[float]:
    weights = [1.0 / ((i + 1) ** theta) for i in range(n)]
    total = sum(weights)
    acc, cdf = 0.0, []
    for w in weights:
        acc += w / total
        cdf.append(acc)
    return cdf


def _pick_key(rng: random.Random, spec: WorkloadSpec, cdf: list[float] | None) -> bytes:
    if cdf is None:
        idx = rng.randrange(spec.keys)
    else:
        x = rng.random()
        lo, hi = 0, spec.keys - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        idx = lo
    return (b"k%0*d" % (max(1, spec.key_len - 1), idx))[: max(2, spec.key_len)]


async def _client_task(cid: str, site: int, addrs: list[str], spec: WorkloadSpec,
                       seed: int, stop_at: float, records: list[dict]) -> None:
    rng = random.Random(seed)
    cdf = _zipf_cdf(spec.keys, spec.zipf_theta) if spec.zipf_theta > 0 else None
    cli = KvClient(addrs, site, cid, spec.unhold_floor_ms, spec.op_timeout_s)
    period = 1.0 / spec.open_rate_per_s if spec.open_rate_per_s > 0 else 0.0
    try:
        while time.monotonic() < stop_at:
            key = _pick_key(rng, spec, cdf)
            is_write = rng.random() < spec.write_ratio
            invoke = mono_us()
            if is_write:
                value = (f"v.{cid}.{mono_us()}".encode() + b"x" * spec.value_len)[: spec.value_len]
                outcome, _val, lat = await cli.put(key, value)
                records.append({
                    "client": cid, "site": site, "op": "put",
                    "key": key.decode("latin-1"), "value": value.decode("latin-1"),
                    "invoke": invoke, "response": invoke + lat if outcome == "ok" else None,
                    "outcome": outcome, "latency_us": lat,
                    "request_id": f"{cid}.{cli._op_n}",
                })
            else:
                outcome, val, lat = await cli.get(key)
                records.append({
                    "client": cid, "site": site, "op": "get",
                    "key": key.decode("latin-1"),
                    "value": None if val is None else val.decode("latin-1"),
                    "invoke": invoke, "response": invoke + lat if outcome == "ok" else None,
                    "outcome": outcome, "latency_us": lat,
                    "request_id": f"{cid}.{cli._op_n}",
                })
            if period:
                await asyncio.sleep(period)
    finally:
        await cli.close()


def _summary(records: list[dict], wall_s: float) -> dict:
    def agg(rows: list[dict]) -> dict:
        lats = sorted(r["latency_us"] for r in rows if r["outcome"] == "ok")
        if not lats:
            return {"count": 0}
        return {
            "count": len(lats),
            "mean_ms": round(sum(lats) / len(lats) / 1000.0, 3),
            "p50_ms": round(lats[len(lats) // 2] / 1000.0, 3),
            "p99_ms": round(lats[min(len(lats) - 1, int(len(lats) * 0.99))] / 1000.0, 3),
        }

    reads = [r for r in records if r["op"] == "get"]
    writes = [r for r in records if r["op"] == "put"]
    ok = [r for r in records if r["outcome"] == "ok"]
    sites = sorted({r["site"] for r in records})
    return {
        "wall_s": round(wall_s, 3),
        "throughput_ops_s": round(len(ok) / wall_s, 1) if wall_s else 0,
        "reads": agg(reads),
        "writes": agg(writes),
        "per_site": {
            str(s): {
                "reads": agg([r for r in reads if r["site"] == s]),
                "writes": agg([r for r in writes if r["site"] == s]),
            }
            for s in sites
        },
    }


async def bench(spec: WorkloadSpec, client_addrs: list[str], seed: int = 0,
                csv_path: str | None = None, summary_path: str | None = None,
                history_path: str | None = None) -> dict:
    """Run the workload; returns (and optionally writes) the summary."""
    spec.validate(len(client_addrs))
    records: list[dict] = []
    stop_at = time.monotonic() + spec.duration_s
    tasks = []
    idx = 0
    for site, count in spec.clients:
        for _ in range(count):
            cid = f"b{site}.{idx}"
            idx += 1
            tasks.append(asyncio.create_task(
                _client_task(cid, site, client_addrs, spec, seed * 1009 + idx,
                             stop_at, records)))
    t0 = time.monotonic()
    await asyncio.gather(*tasks)
    wall = time.monotonic() - t0
    summary = _summary(records, wall)
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["client", "site", "op", "key", "invoke_us", "latency_us", "outcome"])
            for r in records:
                w.writerow([r["client"], r["site"], r["op"], r["key"],
                            r["invoke"], r["latency_us"], r["outcome"]])
    if summary_path:
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
    if history_path:
        with open(history_path, "w", encoding="utf-8") as f:
            for r in records:
                f.write(json.dumps({
                    "client": r["client"], "request_id": r["request_id"],
                    "op": r["op"], "key": r["key"], "value": r["value"] if r["op"] == "put" or r["outcome"] == "ok" else None,
                    "invoke": r["invoke"], "response": r["response"],
                    "outcome": r["outcome"],
                }, sort_keys=True) + "\n")
    return summary
