"""Shared binary container: 8-byte magic, JSON header, float64 payload.

Layout:

    bytes 0..7    magic (exactly 8 bytes, format/version tag)
    bytes 8..11   u32 little-endian header length in bytes
    then          UTF-8 JSON header (sorted keys, compact separators)
    then          concatenated little-endian float64 arrays

Headers are serialized with a canonical key order so that writing the same
logical content twice yields byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC_LEN = 8
_LEN_FMT = "<I"


def dumps_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(path, magic: bytes, header: dict, arrays) -> None:
    if len(magic) != MAGIC_LEN:
        raise ValueError(f"magic must be {MAGIC_LEN} bytes, got {len(magic)}")
    head = dumps_header(header)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack(_LEN_FMT, len(head)))
        fh.write(head)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_container(path, magic: bytes) -> tuple[dict, bytes]:
    """Validate magic, return (header dict, raw float64 payload bytes)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < MAGIC_LEN + 4:
        raise DataError(f"{path}: truncated container (only {len(blob)} bytes)")
    if blob[:MAGIC_LEN] != magic:
        raise DataError(
            f"{path}: bad magic {blob[:MAGIC_LEN]!r}, expected {magic!r}"
        )
    (hlen,) = struct.unpack_from(_LEN_FMT, blob, MAGIC_LEN)
    start = MAGIC_LEN + 4
    if len(blob) < start + hlen:
        raise DataError(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed header: {exc}") from exc
    return header, blob[start + hlen :]


def take_array(payload: bytes, offset: int, shape) -> tuple[np.ndarray, int]:
    """Slice one float64 array of `shape` out of the payload at byte `offset`."""
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    nbytes = 8 * n
    if offset + nbytes > len(payload):
        raise DataError(
            f"payload too short: need {offset + nbytes} bytes, have {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).reshape(shape)
    return arr.astype(np.float64, copy=True), offset + nbytes
