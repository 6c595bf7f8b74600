"""Stable sub-seed derivation for deterministic, order-independent fan-out."""

from __future__ import annotations

import hashlib


def derive_seed(base: int, *parts) -> int:
    """Stable 64-bit sub-seed from a base seed and a label path."""
    text = ":".join([str(base)] + [str(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")
