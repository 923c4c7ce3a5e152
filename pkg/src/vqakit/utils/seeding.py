"""Keyed sub-seed derivation.

Every random component takes its own seed derived from one top-level seed
and a fixed key, so adding or removing a component never shifts the random
stream of another.
"""

from __future__ import annotations

import hashlib

_MASK = (1 << 63) - 1


def derive_seed(seed: int, *keys: object) -> int:
    material = ":".join([str(int(seed))] + [str(k) for k in keys]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big") & _MASK
