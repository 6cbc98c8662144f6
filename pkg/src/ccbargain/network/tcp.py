"""Star-shaped TCP runtime: one coordinator enforcing the round barrier, one process per agent.

Per round k an agent sends its state and plan frames, receives its inbox
terminated by ``release``, computes, sends a ``round-commit`` frame and then
waits for ``release`` (continue) or ``stop``.
"""

from __future__ import annotations

import selectors
import socket
import time
from typing import Callable, Mapping

from .topology import Topology
from .transport import RoundFailure, Router
from .wire import (COMMIT, HEADER, HELLO, PLAN, RELEASE, STATE, STOP, DecodeError, RoundMessage,
                   decode_message, encode_message, read_frame)

DEFAULT_TIMEOUT = 2.0


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host, int(port)


def _nodelay(sock: socket.socket) -> None:
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


class Coordinator:
    def __init__(self, topology: Topology, host: str = "127.0.0.1", port: int = 0,
                 timeout: float = DEFAULT_TIMEOUT, delay_rounds: int = 0, broadcast_all: bool = False,
                 accept_timeout: float = 60.0):
        self.topology = topology
        self.timeout = timeout
        self.accept_timeout = accept_timeout
        self.router = Router(topology, delay_rounds, broadcast_all)
        self.server = socket.create_server((host, port))
        self.address = self.server.getsockname()[:2]
        self.conns: dict[int, socket.socket] = {}
        self._buffers: dict[int, bytearray] = {}

    def close(self) -> None:
        for conn in self.conns.values():
            try:
                conn.close()
            except OSError:
                pass
        self.server.close()

    def accept_agents(self) -> None:
        n = self.topology.n_agents
        self.server.settimeout(self.accept_timeout)
        deadline = time.monotonic() + self.accept_timeout
        while len(self.conns) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RoundFailure(-1, set(range(n)) - set(self.conns), "no connection")
            self.server.settimeout(remaining)
            try:
                conn, _ = self.server.accept()
            except socket.timeout:
                raise RoundFailure(-1, set(range(n)) - set(self.conns), "no connection") from None
            _nodelay(conn)
            conn.settimeout(self.accept_timeout)
            hello = decode_message(read_frame(conn))
            if hello.kind != HELLO or not 0 <= hello.agent_id < n or hello.agent_id in self.conns:
                conn.close()
                raise RoundFailure(-1, [hello.agent_id], "bad hello")
            conn.setblocking(False)
            self.conns[hello.agent_id] = conn
            self._buffers[hello.agent_id] = bytearray()

    def _gather(self, k: int, want: Mapping[str, int]) -> dict[int, list[RoundMessage]]:
        """Collect ``want[kind]`` frames of step k from every agent, or fail after the timeout."""
        need = {i: dict(want) for i in self.conns}
        got: dict[int, list[RoundMessage]] = {i: [] for i in self.conns}
        sel = selectors.DefaultSelector()
        for i, conn in self.conns.items():
            sel.register(conn, selectors.EVENT_READ, i)
        deadline = time.monotonic() + self.timeout
        try:
            while any(sum(v.values()) for v in need.values()):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise RoundFailure(k, [i for i, v in need.items() if sum(v.values())], "timeout")
                for key, _ in sel.select(remaining):
                    i = key.data
                    try:
                        chunk = key.fileobj.recv(65536)
                    except BlockingIOError:
                        continue
                    if not chunk:
                        raise RoundFailure(k, [i], "connection closed")
                    buf = self._buffers[i]
                    buf.extend(chunk)
                    while len(buf) >= HEADER.size:
                        (length,) = HEADER.unpack_from(buf)
                        if len(buf) < HEADER.size + length:
                            break
                        frame = bytes(buf[:HEADER.size + length])
                        del buf[:HEADER.size + length]
                        m = decode_message(frame)
                        if m.agent_id != i or m.k != k or need[i].get(m.kind, 0) <= 0:
                            raise RoundFailure(k, [i], f"unexpected {m.kind} for step {m.k}")
                        need[i][m.kind] -= 1
                        got[i].append(m)
        finally:
            sel.close()
        return got

    def _send(self, i: int, frames: bytes) -> None:
        conn = self.conns[i]
        conn.setblocking(True)
        conn.settimeout(self.timeout)
        try:
            conn.sendall(frames)
        except OSError as exc:
            raise RoundFailure(-1, [i], f"send failed: {exc}") from None
        finally:
            conn.setblocking(False)

    def run(self, steps: int, on_commits: Callable[[int, dict[int, RoundMessage]], bool]) -> int:
        """Drive ``steps`` rounds; ``on_commits`` returns True to stop early. Returns rounds run."""
        rounds = 0
        try:
            for k in range(steps):
                outboxes = self._gather(k, {STATE: 1, PLAN: 1})
                inboxes = self.router.route(outboxes, k)
                release = encode_message(RoundMessage(RELEASE, -1, k))
                for i in sorted(self.conns):
                    self._send(i, b"".join(encode_message(m) for m in inboxes[i]) + release)
                commits = {i: ms[0] for i, ms in self._gather(k, {COMMIT: 1}).items()}
                rounds += 1
                stop = on_commits(k, commits) or k == steps - 1
                signal = encode_message(RoundMessage(STOP if stop else RELEASE, -1, k))
                for i in sorted(self.conns):
                    self._send(i, signal)
                if stop:
                    break
        finally:
            self.close()
        return rounds


def run_agent(address: tuple[str, int], runtime, timeout: float = 60.0) -> int:
    """Connect and serve rounds for ``runtime`` (an AgentRuntime) until stopped."""
    sock = socket.create_connection(address, timeout=timeout)
    _nodelay(sock)
    k = 0
    try:
        sock.sendall(encode_message(RoundMessage(HELLO, runtime.agent_id, 0)))
        while True:
            sock.sendall(b"".join(encode_message(m) for m in runtime.outbox(k)))
            inbox = []
            while True:
                m = decode_message(read_frame(sock))
                if m.kind == RELEASE:
                    break
                if m.kind == STOP:
                    return k
                inbox.append(m)
            commit = runtime.step(k, inbox)
            sock.sendall(encode_message(commit))
            m = decode_message(read_frame(sock))
            k += 1
            if m.kind == STOP:
                return k
    finally:
        sock.close()


__all__ = ["Coordinator", "run_agent", "parse_address", "DecodeError", "RoundFailure"]
