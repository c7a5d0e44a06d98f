"""Binary embedding store writer.

Little endian throughout; the full layout is documented in
docs/formats.md at the repository root:

    magic    4 bytes   "EMBS"
    version  u8        1
    n_obj    u32
    d_v      u32       vision dimension
    d_l      u32       language dimension

then per object:

    id       u32 byte length + utf-8 bytes
    n_views  u8        always 5: front, back, left, right, top-down
    views    n_views * d_v float32
    n_expr   u32       at least 1
    per expression:
      n_tok  u32       at least 1
      per token:
        text        u32 byte length + utf-8 bytes
        has_vector  u8
        vector      d_l float32, present only when has_vector is 1

The file appears atomically: bytes go to a temp file in the destination
directory which is then renamed over the target, so readers never see a
partial store.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

MAGIC = b"EMBS"
VERSION = 1
N_VIEWS = 5


@dataclass(frozen=True)
class ObjectEntry:
    """One object's worth of store content.

    expressions is a tuple of expressions, each a tuple of (token, vector)
    pairs; a vector of None marks a token that has no word vector and is
    written with has_vector 0.
    """

    object_id: str
    views: np.ndarray
    expressions: tuple[tuple[tuple[str, np.ndarray | None], ...], ...]


def _write_str(f, s: str) -> None:
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def write_store(path, entries, d_v: int, d_l: int) -> None:
    """Write entries to path, atomically.

    Refuses input that a conforming reader would reject: wrong view array
    shapes, objects without expressions, empty expressions, duplicate ids,
    wrong vector lengths.
    """
    path = os.fspath(path)
    entries = list(entries)
    seen: set[str] = set()
    for e in entries:
        if e.object_id in seen:
            raise ValueError(f"duplicate object id {e.object_id!r}")
        seen.add(e.object_id)
        views = np.asarray(e.views, dtype=np.float32)
        if views.shape != (N_VIEWS, d_v):
            raise ValueError(
                f"object {e.object_id!r}: views shape {views.shape} != ({N_VIEWS},{d_v})")
        if not e.expressions:
            raise ValueError(f"object {e.object_id!r} has no expressions")
        for expr in e.expressions:
            if not expr:
                raise ValueError(f"object {e.object_id!r} has an empty expression")
            for token, vec in expr:
                if vec is not None and np.asarray(vec).shape != (d_l,):
                    raise ValueError(
                        f"object {e.object_id!r}: token {token!r} vector has "
                        f"shape {np.asarray(vec).shape}, wanted ({d_l},)")

    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".store-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<B", VERSION))
            f.write(struct.pack("<III", len(entries), d_v, d_l))
            for e in entries:
                _write_str(f, e.object_id)
                f.write(struct.pack("<B", N_VIEWS))
                views = np.asarray(e.views, dtype=np.float32)
                f.write(views.astype("<f4", copy=False).tobytes())
                f.write(struct.pack("<I", len(e.expressions)))
                for expr in e.expressions:
                    f.write(struct.pack("<I", len(expr)))
                    for token, vec in expr:
                        _write_str(f, token)
                        if vec is None:
                            f.write(struct.pack("<B", 0))
                        else:
                            vec = np.asarray(vec, dtype=np.float32)
                            f.write(struct.pack("<B", 1))
                            f.write(vec.astype("<f4", copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
