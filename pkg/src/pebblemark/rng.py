"""Seed handling. All randomness in the package flows through here."""

from __future__ import annotations

import hashlib
import hmac
import random

SEED_BYTES = 32


def as_seed(seed: bytes | str | int | None) -> bytes:
    """Normalize a user seed to 32 bytes."""
    if seed is None:
        return b"\x00" * SEED_BYTES
    if isinstance(seed, int):
        seed = seed.to_bytes(max(1, (seed.bit_length() + 7) // 8), "big")
    elif isinstance(seed, str):
        seed = seed.encode()
    if len(seed) == SEED_BYTES:
        return bytes(seed)
    return hashlib.sha256(b"seed" + bytes(seed)).digest()


def derive(seed: bytes, *labels: bytes | str | int) -> bytes:
    """Domain-separated child seed."""
    msg = b"".join(_enc(x) for x in labels)
    return hmac.new(as_seed(seed), msg, hashlib.sha256).digest()


def stream(seed: bytes, *labels: bytes | str | int) -> random.Random:
    return random.Random(int.from_bytes(derive(seed, *labels), "big"))


def _enc(x: bytes | str | int) -> bytes:
    if isinstance(x, int):
        b = x.to_bytes(8, "big", signed=True)
    elif isinstance(x, str):
        b = x.encode()
    else:
        b = bytes(x)
    return len(b).to_bytes(4, "big") + b
