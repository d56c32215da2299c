"""Snapshot files, diagnostics CSV and JSON summaries.

Snapshot layout (little-endian):
    magic (8 bytes) | format_version u32 | K u32 | M u32 | t f64 | tags_len u32 | tags (utf-8)
    | payload: complex128 arrays u⁺, u⁻, b⁺, b⁻, f, ḟ in that order
    | SHA-256 of everything before (32 bytes)
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SnapshotError
from .evolution import SheetState

MAGIC = b"CVSHEET\x00"
FORMAT_VERSION = 1
LAYER_TAGS = "u_plus,u_minus,b_plus,b_minus,f,fdot"
_HEAD = struct.Struct("<8sIIIdI")
_DIGEST = 32


@dataclass(frozen=True)
class Snapshot:
    format_version: int
    K: int
    M: int
    t: float
    layer_tags: tuple[str, ...]
    arrays: tuple[np.ndarray, ...]

    def to_state(self) -> SheetState:
        return SheetState.from_arrays(self.arrays, self.K, self.M, self.t)


def _shapes(K: int, M: int) -> list[tuple[int, ...]]:
    n = 2 * K + 1
    vec = (3, n, n, M)
    return [vec, vec, vec, vec, (n, n), (n, n)]


def encode_snapshot(state: SheetState) -> bytes:
    tags = LAYER_TAGS.encode()
    head = _HEAD.pack(MAGIC, FORMAT_VERSION, state.K, state.M, float(state.t), len(tags))
    payload = b"".join(np.ascontiguousarray(a, dtype="<c16").tobytes() for a in state.arrays())
    body = head + tags + payload
    return body + hashlib.sha256(body).digest()


def decode_snapshot(blob: bytes) -> Snapshot:
    if len(blob) < _HEAD.size + _DIGEST:
        raise SnapshotError("load_snapshot: file truncated (shorter than the header)")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise SnapshotError("load_snapshot: checksum mismatch (file truncated or corrupted)")
    magic, version, K, M, t, tag_len = _HEAD.unpack_from(body)
    if magic != MAGIC:
        raise SnapshotError("load_snapshot: not a snapshot file (bad magic)")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"load_snapshot: format version {version} is not supported (expected {FORMAT_VERSION})")
    pos = _HEAD.size
    tags = tuple(body[pos : pos + tag_len].decode().split(","))
    pos += tag_len
    arrays = []
    for shape in _shapes(K, M):
        count = int(np.prod(shape))
        nbytes = 16 * count
        if pos + nbytes > len(body):
            raise SnapshotError("load_snapshot: payload truncated")
        arrays.append(np.frombuffer(body, dtype="<c16", count=count, offset=pos).reshape(shape).astype(complex))
        pos += nbytes
    if pos != len(body):
        raise SnapshotError("load_snapshot: trailing bytes after the payload")
    return Snapshot(version, K, M, t, tags, tuple(arrays))


def save_snapshot(state: SheetState, path: str | Path) -> None:
    Path(path).write_bytes(encode_snapshot(state))


def read_snapshot(path: str | Path) -> Snapshot:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"load_snapshot: cannot read {path}: {exc}") from exc
    return decode_snapshot(blob)


def load_snapshot(path: str | Path) -> SheetState:
    return read_snapshot(path).to_state()


class DiagnosticsWriter:
    """Append-only CSV with a fixed column order; rows are flushed as written."""

    def __init__(self, path: str | Path, columns: list[str]):
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)
        self._fh.flush()

    def write(self, row: dict[str, float]) -> None:
        self._writer.writerow([_fmt(row.get(c, float("nan"))) for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_json(path: str | Path, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
