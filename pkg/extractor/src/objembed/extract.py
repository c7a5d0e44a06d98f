"""End-to-end extraction: catalog + view images + word vectors -> store.

All input validation happens before the backbone is even constructed.
A run either writes a store that downstream loaders fully accept, or it
writes nothing at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import catalog as catalog_mod
from . import images, store, words


class ExtractError(ValueError):
    """Inputs that cannot produce a store downstream loaders accept."""


@dataclass(frozen=True)
class ExtractJob:
    catalog: str
    image_root: str
    word_vectors: str
    out: str
    weights: str = "pretrained"


@dataclass(frozen=True)
class ExtractReport:
    n_objects: int
    d_v: int
    d_l: int
    oov: tuple[tuple[str, str], ...]
    store_path: str
    sidecar_path: str


def run(job: ExtractJob) -> ExtractReport:
    cat = catalog_mod.load_catalog(job.catalog)
    vectors, d_l = words.load_word_vectors(job.word_vectors, cat.tokens())
    images.check_views(job.image_root, cat.objects)

    # An object none of whose tokens have word vectors would make the
    # whole store unloadable, so refuse it up front by name.
    for oid in cat.objects:
        toks = {t for expr in cat.expressions[oid] for t in catalog_mod.tokenize(expr)}
        if not toks & vectors.keys():
            raise ExtractError(
                f"object {oid!r}: none of its expression tokens have word "
                f"vectors, the store would fail validation")

    encoder = images.ViewEncoder(job.weights)
    entries = []
    oov: list[tuple[str, str]] = []
    seen_oov: set[tuple[str, str]] = set()
    for oid in cat.objects:
        paths = [images.view_path(job.image_root, oid, v) for v in images.VIEWS]
        feats = encoder.encode(paths)
        exprs = []
        for expr in cat.expressions[oid]:
            row = []
            for token in catalog_mod.tokenize(expr):
                vec = vectors.get(token)
                if vec is None and (oid, token) not in seen_oov:
                    seen_oov.add((oid, token))
                    oov.append((oid, token))
                row.append((token, vec))
            exprs.append(tuple(row))
        entries.append(store.ObjectEntry(oid, feats, tuple(exprs)))

    store.write_store(job.out, entries, d_v=encoder.dim, d_l=d_l)
    sidecar = job.out + ".oov.json"
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump([{"object": o, "token": t} for o, t in oov],
                  f, indent=2, sort_keys=True)
        f.write("\n")
    return ExtractReport(
        n_objects=len(cat.objects),
        d_v=encoder.dim,
        d_l=d_l,
        oov=tuple(oov),
        store_path=job.out,
        sidecar_path=sidecar,
    )
