"""Binary checkpoint archive for named float32 arrays plus string metadata.

Layout (all integers little-endian):

    magic   4 bytes  b"TNSR"
    version u8       1
    n_meta  u32      then n_meta pairs of (string key, string value)
    n_param u32      then per parameter:
        name   string
        ndim   u32
        shape  ndim x u32
        data   prod(shape) float32 values, C order

where ``string`` is u32 byte length followed by UTF-8 bytes. Writes go to a
temp file in the same directory and are renamed into place, so a reader never
sees a half-written archive under the final name.
"""
from __future__ import annotations

import os
import struct
import tempfile
from typing import BinaryIO

import numpy as np

MAGIC = b"TNSR"
VERSION = 1


class CheckpointError(ValueError):
    """Raised when a file is not a readable checkpoint archive."""


def _write_str(f: BinaryIO, s: str) -> None:
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def _read_exact(f: BinaryIO, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise CheckpointError(f"truncated archive: wanted {n} bytes, got {len(b)}")
    return b


def _read_str(f: BinaryIO) -> str:
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, n).decode("utf-8")


def save_arrays(path: str | os.PathLike, arrays: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> None:
    meta = meta or {}
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<B", VERSION))
            f.write(struct.pack("<I", len(meta)))
            for k, v in meta.items():
                _write_str(f, k)
                _write_str(f, str(v))
            f.write(struct.pack("<I", len(arrays)))
            for name, arr in arrays.items():
                # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
                a = np.asarray(arr, dtype=np.float32)
                _write_str(f, name)
                f.write(struct.pack("<I", a.ndim))
                for s in a.shape:
                    f.write(struct.pack("<I", s))
                f.write(a.astype("<f4", copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_arrays(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint archive")
        (version,) = struct.unpack("<B", _read_exact(f, 1))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported archive version {version}")
        (n_meta,) = struct.unpack("<I", _read_exact(f, 4))
        meta = {}
        for _ in range(n_meta):
            k = _read_str(f)
            meta[k] = _read_str(f)
        (n_param,) = struct.unpack("<I", _read_exact(f, 4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_param):
            name = _read_str(f)
            if name in arrays:
                raise CheckpointError(f"{path}: duplicate parameter {name!r}")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim)) if ndim else ()
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = _read_exact(f, 4 * count)
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        trailing = f.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after last parameter")
    return arrays, meta
