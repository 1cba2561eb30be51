"""Asyncio client library: drives the same retry/unhold session logic as the
simulated clients against real sockets."""
from __future__ import annotations

import asyncio
import time

from ..messages import (
    ClientRead,
    ClientReadReply,
    ClientRedirect,
    ClientUnavailable,
    ClientWrite,
    ClientWriteReply,
    CtlReply,
    CtlRequest,
    Msg,
)
from ..model import Roster
from ..reads import ClientArm, ClientCache, ClientDone, ClientSend, ClientSession
from .config import PeerAddr
from .wire import FrameReader, encode


def mono_us() -> int:
    return time.monotonic_ns() // 1000


class KvClient:
    """One logical client near `site`. Thread-unsafe; one op at a time per
    instance (run several instances for concurrency)."""

    def __init__(self, client_addrs: list[str], site: int, cid: str,
                 unhold_floor_ms: float = 50.0, op_timeout_s: float = 30.0) -> None:
        self.addrs = client_addrs
        self.cid = cid
        self.cache = ClientCache(site, len(client_addrs), int(unhold_floor_ms * 1000))
        self.patience = int(op_timeout_s * 1_000_000)
        self.conns: dict[int, tuple[asyncio.StreamReader, asyncio.StreamWriter]] = {}
        self.seq = 0
        self.inbox: asyncio.Queue = asyncio.Queue()
        self._readers: list[asyncio.Task] = []
        self._op_n = 0

    async def close(self) -> None:
        for t in self._readers:
            t.cancel()
        for _r, w in self.conns.values():
            w.close()
        self.conns.clear()

    async def _conn(self, node: int):
        c = self.conns.get(node)
        if c is not None and not c[1].is_closing():
            return c
        host, port = PeerAddr.parse(self.addrs[node])
        reader, writer = await asyncio.open_connection(host, port)
        self.conns[node] = (reader, writer)
        self._readers.append(asyncio.create_task(self._read_loop(node, reader)))
        return reader, writer

    async def _read_loop(self, node: int, reader: asyncio.StreamReader) -> None:
        frames = FrameReader()
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    return
                for env in frames.feed(data):
                    self.inbox.put_nowait(env.msg)
        except (ConnectionError, ValueError):
            return

    async def _send(self, node: int, msg: Msg) -> None:
        try:
            _r, w = await self._conn(node)
            self.seq += 1
            w.write(encode(self.cid, self.seq, msg))
            await w.drain()
        except OSError:
            pass  # unreachable node: the session timer will rotate

    async def op(self, op: str, key: bytes, value: bytes | None = None,
                 request_id: str | None = None) -> tuple[str, bytes | None, int]:
        """Run one op to completion; returns (outcome, value, latency_us)."""
        self._op_n += 1
        rid = request_id or f"{self.cid}.{self._op_n}"
        started = mono_us()
        sess = ClientSession(self.cache, rid, key, op == "put", started, self.patience)
        outs = sess.begin()
        deadline = started + self.cache.unhold_floor
        while True:
            done: ClientDone | None = None
            for o in outs:
                if isinstance(o, ClientSend):
                    msg: Msg
                    if op == "put":
                        msg = ClientWrite(key, value or b"", rid, self.cache.site,
                                          self.cache.wants_roster(), o.fresh)
                    else:
                        msg = ClientRead(key, rid, self.cache.site,
                                         self.cache.wants_roster(), o.fresh)
                    await self._send(o.target, msg)
                elif isinstance(o, ClientArm):
                    deadline = o.deadline
                elif isinstance(o, ClientDone):
                    done = o
            if done is not None:
                return done.outcome, done.value, mono_us() - started
            timeout = max(0.0, (deadline - mono_us()) / 1e6)
            try:
                msg = await asyncio.wait_for(self.inbox.get(), timeout)
            except asyncio.TimeoutError:
                outs = sess.on_timer(mono_us())
                continue
            outs = self._dispatch(sess, msg)

    def _dispatch(self, sess: ClientSession, msg: Msg) -> list:
        now = mono_us()
        if isinstance(msg, ClientReadReply) and msg.request_id == sess.request_id:
            return sess.on_reply("read", msg.value, None, msg.bal, msg.roster, now)
        if isinstance(msg, ClientWriteReply) and msg.request_id == sess.request_id:
            return sess.on_reply("write", None, None, msg.bal, msg.roster, now)
        if isinstance(msg, ClientRedirect) and msg.request_id == sess.request_id:
            return sess.on_reply("redirect", None, msg.target, msg.bal, msg.roster, now)
        if isinstance(msg, ClientUnavailable) and msg.request_id == sess.request_id:
            return sess.on_reply("unavailable", None, None, None, None, now)
        return []

    async def put(self, key: bytes, value: bytes):
        return await self.op("put", key, value)

    async def get(self, key: bytes):
        return await self.op("get", key)


async def ctl_request(addr: str, verb: str, roster: Roster | None = None,
                      timeout_s: float = 5.0) -> CtlReply:
    """One-shot operator request against a node's client port."""
    host, port = PeerAddr.parse(addr)
    reader, writer = await asyncio.open_connection(host, port)
    try:
        writer.write(encode("ctl", 1, CtlRequest(verb, roster)))
        await writer.drain()
        frames = FrameReader()
        deadline = time.monotonic() + timeout_s
        while True:
            data = await asyncio.wait_for(reader.read(65536),
                                          max(0.01, deadline - time.monotonic()))
            if not data:
                raise ConnectionError("connection closed before reply")
            for env in frames.feed(data):
                if isinstance(env.msg, CtlReply):
                    return env.msg
    finally:
        writer.close()
