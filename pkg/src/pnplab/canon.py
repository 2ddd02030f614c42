"""Canonical JSON and configuration fingerprints."""

from __future__ import annotations

import hashlib
import json


def canonical_json(obj) -> str:
    """Key-sorted, compact, ASCII-only JSON; byte-stable across runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def fingerprint(obj) -> str:
    """Short stable hash identifying a configuration."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]
