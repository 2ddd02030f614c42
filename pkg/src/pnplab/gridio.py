"""Binary container holding one or more named float64 arrays.

Layout: magic "SRVGRID1\n", a little-endian u64 manifest length, the
canonical-JSON manifest (version, entries with name/shape/offset/count,
sorted by name), then the raw little-endian float64 payload. Offsets are
element offsets into the payload. Writing the same arrays twice produces
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .canon import canonical_json
from .errors import ConfigurationError, UsageError

MAGIC = b"SRVGRID1\n"
VERSION = 1


def write_grids(path, grids: dict[str, np.ndarray]) -> None:
    if not grids:
        raise UsageError("container needs at least one grid")
    entries = []
    chunks = []
    offset = 0
    for name in sorted(grids):
        arr = np.ascontiguousarray(np.asarray(grids[name], dtype="<f8"))
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "count": arr.size}
        )
        chunks.append(arr.tobytes())
        offset += arr.size
    manifest = canonical_json({"version": VERSION, "entries": entries}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for chunk in chunks:
            fh.write(chunk)


def read_grids(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ConfigurationError("not a grid container: bad magic")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise ConfigurationError("truncated container: missing manifest length")
    (mlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + mlen:
        raise ConfigurationError("truncated container: manifest shorter than declared")
    try:
        manifest = json.loads(raw[off : off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"unreadable manifest: {exc}") from exc
    off += mlen
    if manifest.get("version") != VERSION:
        raise ConfigurationError(f"unknown container version {manifest.get('version')}")
    payload = raw[off:]
    total = len(payload) // 8
    out: dict[str, np.ndarray] = {}
    spans: list[tuple[int, int]] = []
    for entry in manifest["entries"]:
        name, shape = entry["name"], tuple(entry["shape"])
        start, count = int(entry["offset"]), int(entry["count"])
        if count != int(np.prod(shape)):
            raise ConfigurationError(f"entry {name!r}: count does not match shape")
        if start < 0 or start + count > total:
            raise ConfigurationError(f"entry {name!r} reaches past the payload")
        for s, e in spans:
            if start < e and s < start + count:
                raise ConfigurationError(f"entry {name!r} overlaps another entry")
        spans.append((start, start + count))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=8 * start)
        out[name] = arr.reshape(shape).astype(np.float64)
    return out
