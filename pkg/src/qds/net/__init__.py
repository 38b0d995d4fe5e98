"""Framed wire protocol and a three-endpoint session harness."""
from .frames import (
    Frame,
    FrameError,
    LengthMismatch,
    MalformedFrame,
    MessageType,
    TruncatedFrame,
    UnknownMessageType,
    decode_frame,
    encode_frame,
)
from .session import SessionConfig, SessionError, SessionTranscript, run_session
from .transport import CHANNELS, ChannelSpec, ChannelViolation

__all__ = [
    "CHANNELS",
    "ChannelSpec",
    "ChannelViolation",
    "Frame",
    "FrameError",
    "LengthMismatch",
    "MalformedFrame",
    "MessageType",
    "SessionConfig",
    "SessionError",
    "SessionTranscript",
    "TruncatedFrame",
    "UnknownMessageType",
    "decode_frame",
    "encode_frame",
    "run_session",
]
