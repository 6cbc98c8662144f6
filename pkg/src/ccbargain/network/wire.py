"""Length-prefixed text frames.

A frame is a 4-byte big-endian length followed by the UTF-8 record
``kind|agent_id|k|f1,f2,...``. Floats are written with ``repr``, the
shortest decimal that round-trips, so decoding is bit-exact.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

STATE = "state-broadcast"
PLAN = "plan-broadcast"
COMMIT = "round-commit"
# transport control frames
HELLO = "hello"
RELEASE = "release"
STOP = "stop"

COMMIT_FIELDS = ("d", "v", "y", "u", "psi", "kappa", "beta", "coop")
_FIXED_LENGTH = {STATE: 3, COMMIT: len(COMMIT_FIELDS), HELLO: 0, RELEASE: 0, STOP: 0}
KINDS = (STATE, PLAN, COMMIT, HELLO, RELEASE, STOP)
HEADER = struct.Struct(">I")
MAX_FRAME = 1 << 20


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class RoundMessage:
    kind: str
    agent_id: int
    k: int
    payload: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        object.__setattr__(self, "payload", tuple(float(p) for p in self.payload))
        expected = _FIXED_LENGTH.get(self.kind)
        if expected is not None and len(self.payload) != expected:
            raise ValueError(f"{self.kind} carries {expected} values, got {len(self.payload)}")


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "nan"
    return repr(value)


def encode_message(m: RoundMessage) -> bytes:
    body = f"{m.kind}|{m.agent_id}|{m.k}|{','.join(_fmt(p) for p in m.payload)}".encode("utf-8")
    return HEADER.pack(len(body)) + body


def decode_message(data: bytes, nu: int | None = None) -> RoundMessage:
    """Decode exactly one frame. ``nu`` validates plan-broadcast payload length."""
    if len(data) < HEADER.size:
        raise DecodeError("truncated length prefix", len(data))
    (length,) = HEADER.unpack_from(data)
    if length > MAX_FRAME:
        raise DecodeError(f"frame length {length} exceeds limit", 0)
    if len(data) - HEADER.size != length:
        raise DecodeError(f"frame declares {length} bytes, has {len(data) - HEADER.size}", len(data))
    try:
        text = data[HEADER.size:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError("invalid UTF-8", HEADER.size + exc.start) from None
    parts = text.split("|")
    if len(parts) != 4:
        raise DecodeError(f"expected 4 fields, got {len(parts)}", HEADER.size)
    kind, agent, k, floats = parts
    offset = HEADER.size
    if kind not in KINDS:
        raise DecodeError(f"unknown kind {kind!r}", offset)
    offset += len(kind) + 1
    try:
        agent_id = int(agent)
    except ValueError:
        raise DecodeError(f"bad agent id {agent!r}", offset) from None
    offset += len(agent) + 1
    try:
        step = int(k)
    except ValueError:
        raise DecodeError(f"bad step {k!r}", offset) from None
    offset += len(k) + 1
    values = []
    if floats:
        for tok in floats.split(","):
            try:
                values.append(float(tok))
            except ValueError:
                raise DecodeError(f"bad float {tok!r}", offset) from None
            offset += len(tok) + 1
    if kind == PLAN and nu is not None and len(values) != nu:
        raise DecodeError(f"plan payload has {len(values)} values, expected {nu}", HEADER.size)
    try:
        return RoundMessage(kind, agent_id, step, tuple(values))
    except ValueError as exc:
        raise DecodeError(str(exc), HEADER.size) from None


def read_frame(sock) -> bytes:
    """Read one full frame (prefix included) from a blocking socket."""
    head = _read_exact(sock, HEADER.size)
    (length,) = HEADER.unpack(head)
    if length > MAX_FRAME:
        raise DecodeError(f"frame length {length} exceeds limit", 0)
    return head + _read_exact(sock, length)


def _read_exact(sock, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf.extend(chunk)
    return bytes(buf)
