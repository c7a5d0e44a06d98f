"""Per-object feature store: five view vectors and tokenized expressions.

The store file is produced offline (by the extractor tool) and read here.
Binary layout, all integers little-endian, all floats fp32:

    magic    4 bytes  b"EMBS"
    version  u8       1
    n_obj    u32
    D_v      u32      view vector dimension
    D_l      u32      token vector dimension
    then per object:
        id       string (u32 byte length + UTF-8)
        n_views  u8     must be 5 (front, back, left, right, top-down)
        views    5 x D_v fp32
        n_expr   u32
        per expression:
            n_tok  u32
            per token:
                text        string
                has_vector  u8 (0 = out of vocabulary)
                vector      D_l fp32, present only when has_vector = 1

A token without a vector stays in the file (the text is still data) but is
skipped when averaging. Objects whose tokens are all vectorless fail the
load, since they would have no language embedding at all.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

MAGIC = b"EMBS"
VERSION = 1
N_VIEWS = 5


class StoreFormatError(ValueError):
    """File is not a valid embedding store."""


class LanguageDataError(ValueError):
    """An object's expressions contain no embeddable token."""


@dataclass(frozen=True)
class LoadReport:
    """What the loader skipped: (object id, token text) per vectorless token."""

    oov: tuple[tuple[str, str], ...] = ()


@dataclass
class EmbeddingStore:
    """Immutable after load. ``vision[id]`` is a (5, D_v) array; ``language[id]``
    is a list of expressions, each a list of (token, vector-or-None)."""

    dims: tuple[int, int]
    vision: dict[str, np.ndarray]
    language: dict[str, list[list[tuple[str, np.ndarray | None]]]]
    report: LoadReport = field(default_factory=LoadReport)

    def object_ids(self) -> list[str]:
        return list(self.vision)

    def __contains__(self, object_id: str) -> bool:
        return object_id in self.vision


def _write_str(f: BinaryIO, s: str) -> None:
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def _read_exact(f: BinaryIO, n: int, path: str) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise StoreFormatError(f"{path}: truncated store, wanted {n} bytes got {len(b)}")
    return b


def _read_str(f: BinaryIO, path: str) -> str:
    (n,) = struct.unpack("<I", _read_exact(f, 4, path))
    return _read_exact(f, n, path).decode("utf-8")


def write_store(
    path: str | os.PathLike,
    vision: dict[str, np.ndarray],
    language: dict[str, list[list[tuple[str, np.ndarray | None]]]],
    dims: tuple[int, int],
) -> None:
    """Serialize a store. Insertion order of ``vision`` fixes object order."""
    d_v, d_l = dims
    if set(vision) != set(language):
        raise ValueError("vision and language must cover the same object ids")
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".store-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<B", VERSION))
            f.write(struct.pack("<III", len(vision), d_v, d_l))
            for oid, views in vision.items():
                views = np.asarray(views, dtype=np.float32)
                if views.shape != (N_VIEWS, d_v):
                    raise ValueError(f"object {oid!r}: views shape {views.shape} != ({N_VIEWS},{d_v})")
                _write_str(f, oid)
                f.write(struct.pack("<B", N_VIEWS))
                f.write(views.astype("<f4", copy=False).tobytes())
                exprs = language[oid]
                f.write(struct.pack("<I", len(exprs)))
                for expr in exprs:
                    f.write(struct.pack("<I", len(expr)))
                    for token, vec in expr:
                        _write_str(f, token)
                        if vec is None:
                            f.write(struct.pack("<B", 0))
                        else:
                            vec = np.asarray(vec, dtype=np.float32)
                            if vec.shape != (d_l,):
                                raise ValueError(
                                    f"object {oid!r}: token {token!r} vector shape {vec.shape} != ({d_l},)"
                                )
                            f.write(struct.pack("<B", 1))
                            f.write(vec.astype("<f4", copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_store(path: str | os.PathLike) -> EmbeddingStore:
    """Read and fully validate a store file.

    Raises StoreFormatError for structural problems (naming the object where
    possible) and LanguageDataError when an object has no embeddable token.
    """
    path = os.fspath(path)
    with open(path, "rb") as f:
        if _read_exact(f, 4, path) != MAGIC:
            raise StoreFormatError(f"{path}: bad magic, not an embedding store")
        (version,) = struct.unpack("<B", _read_exact(f, 1, path))
        if version != VERSION:
            raise StoreFormatError(f"{path}: unsupported store version {version}")
        n_obj, d_v, d_l = struct.unpack("<III", _read_exact(f, 12, path))
        vision: dict[str, np.ndarray] = {}
        language: dict[str, list[list[tuple[str, np.ndarray | None]]]] = {}
        oov: list[tuple[str, str]] = []
        for _ in range(n_obj):
            oid = _read_str(f, path)
            if oid in vision:
                raise StoreFormatError(f"{path}: duplicate object id {oid!r}")
            (n_views,) = struct.unpack("<B", _read_exact(f, 1, path))
            if n_views != N_VIEWS:
                raise StoreFormatError(
                    f"{path}: object {oid!r} has {n_views} view vectors, expected {N_VIEWS}"
                )
            raw = _read_exact(f, 4 * N_VIEWS * d_v, path)
            views = np.frombuffer(raw, dtype="<f4").reshape(N_VIEWS, d_v).copy()
            (n_expr,) = struct.unpack("<I", _read_exact(f, 4, path))
            if n_expr == 0:
                raise StoreFormatError(f"{path}: object {oid!r} has no referring expressions")
            exprs = []
            embeddable = 0
            for _ in range(n_expr):
                (n_tok,) = struct.unpack("<I", _read_exact(f, 4, path))
                if n_tok == 0:
                    raise StoreFormatError(f"{path}: object {oid!r} has an empty expression")
                expr = []
                for _ in range(n_tok):
                    token = _read_str(f, path)
                    (has_vec,) = struct.unpack("<B", _read_exact(f, 1, path))
                    if has_vec:
                        vec = np.frombuffer(_read_exact(f, 4 * d_l, path), dtype="<f4").copy()
                        embeddable += 1
                    else:
                        vec = None
                        oov.append((oid, token))
                    expr.append((token, vec))
                exprs.append(expr)
            if embeddable == 0:
                raise LanguageDataError(f"{path}: object {oid!r} has no embeddable tokens")
            vision[oid] = views
            language[oid] = exprs
        if f.read(1):
            raise StoreFormatError(f"{path}: trailing bytes after last object")
    return EmbeddingStore(dims=(d_v, d_l), vision=vision, language=language, report=LoadReport(tuple(oov)))


@dataclass(frozen=True)
class PairEmbedding:
    vision_delta: np.ndarray
    language_delta: np.ndarray


def object_vision_embedding(store: EmbeddingStore, object_id: str) -> np.ndarray:
    if object_id not in store.vision:
        raise KeyError(f"unknown object id {object_id!r}")
    return store.vision[object_id].mean(axis=0)


def object_language_embedding(store: EmbeddingStore, object_id: str) -> np.ndarray:
    """Flat mean over every embeddable token occurrence in every expression."""
    if object_id not in store.language:
        raise KeyError(f"unknown object id {object_id!r}")
    vecs = [vec for expr in store.language[object_id] for _, vec in expr if vec is not None]
    if not vecs:
        raise LanguageDataError(f"object {object_id!r} has no embeddable tokens")
    return np.mean(vecs, axis=0, dtype=np.float64).astype(np.float32)


def pair_embedding(store: EmbeddingStore, grasped_id: str, target_id: str) -> PairEmbedding:
    return PairEmbedding(
        vision_delta=object_vision_embedding(store, grasped_id) - object_vision_embedding(store, target_id),
        language_delta=object_language_embedding(store, grasped_id) - object_language_embedding(store, target_id),
    )
