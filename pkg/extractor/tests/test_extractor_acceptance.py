"""Acceptance gate for the extractor.

One test per criterion, each printing a single pass/fail line.  The gate
feeds a three-object corpus through the full pipeline and checks that the
store round-trips through the primary toolkit's loader at the production
dimensions, that it survives the loader's full validation, and that a
second run reproduces the file byte for byte.
"""

from __future__ import annotations

import numpy as np

from inon.embeddings import load_store
from objembed import ExtractJob, run

from _corpus import OBJECTS


def gate(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


class TestExtractorAcceptance:
    def test_roundtrip_dimensions_and_reproducibility(self, corpus, extraction):
        store = load_store(extraction.store_path)
        gate("store-roundtrip",
             store.dims == (2048, 300) and store.object_ids() == list(OBJECTS),
             f"loaded {len(store.object_ids())} objects at dims {store.dims}")

        shapes_ok = all(
            store.vision[oid].shape == (5, 2048)
            and store.vision[oid].dtype == np.float32
            for oid in OBJECTS)
        exprs_ok = all(
            len(store.language[oid]) == len(OBJECTS[oid]) for oid in OBJECTS)
        gate("store-content", shapes_ok and exprs_ok,
             "five 2048-d views and every referring expression per object")

        out = corpus["root"] / "store_gate_rerun.bin"
        run(ExtractJob(
            catalog=str(corpus["catalog"]),
            image_root=str(corpus["images"]),
            word_vectors=str(corpus["vectors"]),
            out=str(out),
            weights="seeded:0",
        ))
        first = open(extraction.store_path, "rb").read()
        second = open(out, "rb").read()
        gate("store-reproducible", first == second,
             f"two runs, {len(first)} bytes each, identical={first == second}")
