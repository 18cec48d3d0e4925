"""Deterministic child-seed derivation for reproducible runs."""

from __future__ import annotations

import hashlib
import random


def child_seed(*parts: object) -> int:
    """Map a tuple of labels (seed, phase, indices, ...) to a stable 64-bit seed."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big", signed=False)


def stream(*parts: object) -> random.Random:
    """A fresh RNG whose state depends only on the given labels."""
    return random.Random(child_seed(*parts))


def unit(*parts: object) -> float:
    """Deterministic value in [0, 1) derived from the given labels."""
    return child_seed(*parts) / 2**64
