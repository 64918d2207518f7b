"""Versioned binary container: magic, version, JSON header, raw array bytes.

Layout (little-endian)::

    8 bytes  magic b"ECTXBIN\\0"
    4 bytes  format version (uint32)
    8 bytes  header length in bytes (uint64)
    header   UTF-8 JSON, keys sorted, space-padded to a multiple of 8
    data     arrays in sorted name order, each zero-padded to a multiple of 8

The header's "arrays" table maps each name to dtype, shape, and byte offset
relative to the start of the data block. Output depends only on the inputs,
so identical models serialize to identical bytes.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import LearnError

MAGIC = b"ECTXBIN\0"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def _pad(n: int) -> int:
    return (-n) % 8


def _canonical(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == object:
        raise LearnError("object arrays cannot be serialized")
    return np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))


def pack(header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    table = {}
    blobs = []
    offset = 0
    for name in sorted(arrays):
        a = _canonical(arrays[name])
        raw = a.tobytes()
        table[name] = {"dtype": a.dtype.str, "shape": list(a.shape), "offset": offset,
                       "nbytes": len(raw)}
        blobs.append(raw + b"\0" * _pad(len(raw)))
        offset += len(raw) + _pad(len(raw))
    doc = dict(header)
    doc["arrays"] = table
    text = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    text += b" " * _pad(len(text))
    return _PREFIX.pack(MAGIC, VERSION, len(text)) + text + b"".join(blobs)


def unpack(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < _PREFIX.size:
        raise LearnError("truncated container")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise LearnError("not a model container (bad magic)")
    if version != VERSION:
        raise LearnError(f"unsupported container version {version}")
    start = _PREFIX.size + hlen
    if len(data) < start:
        raise LearnError("truncated container header")
    header = json.loads(data[_PREFIX.size:start].decode())
    arrays = {}
    for name, info in header.pop("arrays").items():
        lo = start + info["offset"]
        hi = lo + info["nbytes"]
        if hi > len(data):
            raise LearnError(f"truncated array {name!r}")
        arrays[name] = np.frombuffer(data[lo:hi], dtype=info["dtype"]).reshape(info["shape"]).copy()
    return header, arrays


def save(path: str | os.PathLike, header: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.write_bytes(pack(header, arrays))
    return path


def read_bytes(path: str | os.PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise LearnError(f"cannot read model file {path}: {exc.strerror}") from None


def load(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    return unpack(read_bytes(path))
