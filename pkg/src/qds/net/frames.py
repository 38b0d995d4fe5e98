"""Length-prefixed JSON frames.

Wire layout: a 4-byte big-endian unsigned length, then that many bytes of
UTF-8 JSON. The JSON object has keys ``v`` (format version), ``type``,
``session``, ``seq`` and ``body``, serialised with sorted keys and no
whitespace so encoding is byte-exact. Bit strings inside bodies are
``{"hex": ..., "bit_length": n}`` with bits packed MSB-first.
"""
from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from typing import Any, Dict

from ..errors import QDSError

FRAME_VERSION = 1
PREFIX = struct.Struct(">I")
MAX_PAYLOAD = 2**32 - 1


class MessageType(str, enum.Enum):
    KEEPALIVE = "KEEPALIVE"
    KEY_BLOCK = "KEY_BLOCK"
    ERROR_EST = "ERROR_EST"
    FORWARD_HALF = "FORWARD_HALF"
    KEY_HALF = "KEY_HALF"
    SIGNED_MESSAGE = "SIGNED_MESSAGE"
    FORWARDED_MESSAGE = "FORWARDED_MESSAGE"
    VERDICT = "VERDICT"
    ABORT = "ABORT"


class FrameError(QDSError):
    pass


class TruncatedFrame(FrameError):
    pass


class LengthMismatch(FrameError):
    pass


class MalformedFrame(FrameError):
    pass


class UnknownMessageType(FrameError):
    pass


@dataclass(frozen=True)
class Frame:
    type: MessageType
    session: str
    seq: int
    body: Dict[str, Any] = field(default_factory=dict)

    def payload(self) -> bytes:
        obj = {
            "v": FRAME_VERSION,
            "type": MessageType(self.type).value,
            "session": self.session,
            "seq": self.seq,
            "body": self.body,
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
            "utf-8"
        )


def encode_frame(frame: Frame) -> bytes:
    payload = frame.payload()
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds the 4-byte length prefix")
    return PREFIX.pack(len(payload)) + payload


def decode_payload(payload: bytes) -> Frame:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"payload is not UTF-8 JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedFrame("payload must be a JSON object")
    missing = {"v", "type", "session", "seq", "body"} - set(obj)
    if missing:
        raise MalformedFrame(f"payload missing fields {sorted(missing)}")
    if obj["v"] != FRAME_VERSION:
        raise MalformedFrame(f"unsupported frame version {obj['v']!r}")
    try:
        kind = MessageType(obj["type"])
    except ValueError:
        raise UnknownMessageType(f"unknown frame type {obj['type']!r}") from None
    if (
        not isinstance(obj["session"], str)
        or not isinstance(obj["seq"], int)
        or isinstance(obj["seq"], bool)
        or not isinstance(obj["body"], dict)
    ):
        raise MalformedFrame("frame fields have the wrong types")
    return Frame(type=kind, session=obj["session"], seq=obj["seq"], body=obj["body"])


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one complete frame; trailing or missing bytes are errors."""
    if len(data) < PREFIX.size:
        raise TruncatedFrame(f"need {PREFIX.size} prefix bytes, got {len(data)}")
    (length,) = PREFIX.unpack_from(data)
    available = len(data) - PREFIX.size
    if available < length:
        raise TruncatedFrame(f"prefix announces {length} bytes, only {available} present")
    if available > length:
        raise LengthMismatch(f"prefix announces {length} bytes, got {available}")
    return decode_payload(data[PREFIX.size :])


def read_frame(read_exact) -> Frame:
    """Read one frame using ``read_exact(n) -> bytes``, which must return n bytes or raise."""
    header = read_exact(PREFIX.size)
    (length,) = PREFIX.unpack(header)
    return decode_payload(read_exact(length))
