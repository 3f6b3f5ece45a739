"""Little-endian binary checkpoint container.

Layout::

    magic  b"RGBDCKPT"
    u32    format version
    u32    record count
    records: u32 name length, name (utf-8), u8 dtype code, u8 rank,
             u64 extents[rank], raw little-endian values
    u64    checksum (blake2b, 8 bytes) over everything before it

Metadata (config, counters, RNG state) travels as a uint8 record holding
canonical JSON.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"RGBDCKPT"
VERSION = 1
META_KEY = "__meta__.json"

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1"), 3: np.dtype("<i8")}
_CODES = {v.str: k for k, v in _DTYPES.items()}


class CheckpointError(RuntimeError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def _code_for(arr: np.ndarray) -> int:
    try:
        return _CODES[arr.dtype.newbyteorder("<").str if arr.dtype.itemsize > 1 else arr.dtype.str]
    except KeyError:
        raise CheckpointError(f"unsupported dtype {arr.dtype}") from None


def encode(tensors: "OrderedDict[str, np.ndarray] | dict[str, np.ndarray]", meta: dict) -> bytes:
    records = OrderedDict()
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    records[META_KEY] = np.frombuffer(meta_bytes, dtype=np.uint8)
    for name, arr in tensors.items():
        if name == META_KEY:
            raise CheckpointError(f"reserved record name {META_KEY}")
        records[name] = np.asarray(arr)
    parts = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, arr in records.items():
        code = _code_for(arr)
        raw_name = name.encode()
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    payload = b"".join(parts)
    return payload + _checksum(payload)


def decode(buf: bytes) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    if len(buf) < len(MAGIC) + 16 or buf[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic or truncated)")
    payload, digest = buf[:-8], buf[-8:]
    version, count = struct.unpack_from("<II", buf, len(MAGIC))
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    if _checksum(payload) != digest:
        raise CorruptCheckpointError("checksum mismatch (file truncated or corrupted)")
    pos = len(MAGIC) + 8
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            name = payload[pos : pos + nlen].decode()
            pos += nlen
            code, rank = struct.unpack_from("<BB", payload, pos)
            pos += 2
            shape = struct.unpack_from(f"<{rank}Q", payload, pos)
            pos += 8 * rank
            dtype = _DTYPES[code]
            n = int(np.prod(shape, dtype=np.int64))
            nbytes = n * dtype.itemsize
            if pos + nbytes > len(payload):
                raise CorruptCheckpointError(f"record {name!r} runs past end of file")
            out[name] = np.frombuffer(payload, dtype=dtype, count=n, offset=pos).reshape(shape).copy()
            pos += nbytes
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"malformed record: {exc}") from None
    if pos != len(payload):
        raise CorruptCheckpointError("trailing bytes after last record")
    meta = json.loads(out.pop(META_KEY).tobytes().decode())
    return out, meta


def save(path: str | os.PathLike, tensors, meta: dict) -> None:
    data = encode(tensors, meta)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path: str | os.PathLike):
    with open(path, "rb") as fh:
        return decode(fh.read())
