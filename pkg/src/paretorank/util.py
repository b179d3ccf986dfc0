"""Seed fan-out and content fingerprinting helpers."""

from __future__ import annotations

import hashlib


def child_seed(root: int, *keys) -> int:
    """Derive a stable sub-seed from a root seed and a key path.

    Keyed hashing keeps every consumer's stream independent of how many other
    consumers exist, so adding a new seeded component never shifts the seeds
    of existing ones.
    """
    material = repr((int(root),) + keys).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
