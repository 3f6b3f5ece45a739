"""Binary PPM (P6) and PGM (P5) reading and writing."""

from __future__ import annotations

import os

import numpy as np


class NetpbmError(ValueError):
    pass


def _tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers; return them and the payload offset."""
    vals: list[int] = []
    pos = 2
    n = len(buf)
    while len(vals) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise NetpbmError("malformed header")
        vals.append(int(buf[start:pos]))
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise NetpbmError("malformed header: missing separator before raster")
    return vals, pos + 1


def decode(buf: bytes) -> np.ndarray:
    """Decode P5/P6 bytes to (H, W) or (H, W, 3) integer array (uint8 or uint16)."""
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"unsupported magic {magic!r}")
    (width, height, maxval), offset = _tokens(buf, 3)
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise NetpbmError(f"bad header values {width}x{height} maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    need = count * dtype.itemsize
    if len(buf) - offset < need:
        raise NetpbmError(f"truncated payload: need {need} bytes, have {len(buf) - offset}")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    data = data.astype(np.uint16 if maxval > 255 else np.uint8)
    if data.max(initial=0) > maxval:
        raise NetpbmError("sample exceeds maxval")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return data.reshape(shape)


def encode(image: np.ndarray, maxval: int | None = None) -> bytes:
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    elif image.ndim == 2:
        magic = b"P5"
    else:
        raise NetpbmError(f"cannot encode array of shape {image.shape}")
    if maxval is None:
        maxval = 255 if image.dtype == np.uint8 else 65535
    if image.min(initial=0) < 0 or image.max(initial=0) > maxval:
        raise NetpbmError("pixel values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = image.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    return header + image.astype(dtype).tobytes()


def read(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read())


def write(path: str | os.PathLike, image: np.ndarray, maxval: int | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(image, maxval))
