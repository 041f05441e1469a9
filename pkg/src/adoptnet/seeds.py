"""Deterministic seed derivation: one root seed fans out by named path."""
from __future__ import annotations

import hashlib


def derive_seed(root: int, *parts: object) -> int:
    """Derive a child seed from ``root`` and a path of names.

    Stable across platforms and processes (unlike hash()), so parallel and
    serial runs agree.
    """
    digest = hashlib.sha256()
    digest.update(str(int(root)).encode())
    for part in parts:
        digest.update(b"/")
        digest.update(str(part).encode())
    return int.from_bytes(digest.digest()[:8], "big")
