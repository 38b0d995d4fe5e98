"""Bit-string helpers: bits are held as 1-D ``uint8`` arrays of 0/1."""
from __future__ import annotations

import numpy as np


def as_bits(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.uint8).reshape(-1)
    if arr.size and arr.max() > 1:
        raise ValueError("bit arrays may only hold 0 and 1")
    return arr


def to_hex(bits) -> str:
    """Pack bits MSB-first into a lowercase hex string (last byte zero-padded)."""
    return np.packbits(as_bits(bits)).tobytes().hex()


def from_hex(hex_string: str, bit_length: int) -> np.ndarray:
    raw = bytes.fromhex(hex_string)
    if bit_length < 0 or len(raw) != (bit_length + 7) // 8:
        raise ValueError(
            f"hex payload of {len(raw)} bytes cannot hold exactly {bit_length} bits"
        )
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    if bits[bit_length:].any():
        raise ValueError("nonzero padding bits after bit_length")
    return bits[:bit_length].astype(np.uint8)


def encode(bits) -> dict:
    bits = as_bits(bits)
    return {"hex": to_hex(bits), "bit_length": int(bits.size)}


def decode(obj: dict) -> np.ndarray:
    return from_hex(obj["hex"], int(obj["bit_length"]))
