"""Shared helpers: labeled seed derivation and file digests."""

from __future__ import annotations

import hashlib
from pathlib import Path


def derive_seed(root_seed: int, label: str) -> int:
    """Derive an independent 64-bit sub-seed from a root seed and a label.

    Sub-seeds are stable across processes and platforms (unlike ``hash``),
    so adding a new labeled consumer never perturbs existing streams.
    """
    digest = hashlib.sha256(f"{root_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
