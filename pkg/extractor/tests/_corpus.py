"""Tiny offline test corpus: three objects, five small views each, and a
word vector file covering all but one deliberately unknown token."""

from __future__ import annotations

import shutil

import numpy as np
from PIL import Image

from objembed import VIEWS

OBJECTS = {
    "red_mug": ("the red mug", "red mug"),
    "blue_tray": ("blue tray", "shiny blue tray"),
    "green_block": ("green block", "the zzqx block"),
}
OOV_TOKEN = "zzqx"
D_L = 300


def _write_view(path, rng) -> None:
    # coarse structure on purpose: fine noise would average out to the
    # same gray everywhere once the encoder resizes the image
    arr = np.empty((96, 96, 3), dtype=np.uint8)
    arr[:, :] = rng.integers(0, 256, size=3, dtype=np.uint8)
    arr[24:72, 24:72] = rng.integers(0, 256, size=3, dtype=np.uint8)
    Image.fromarray(arr).save(path)


def build_images(root) -> None:
    rng = np.random.default_rng(1234)
    for oid in OBJECTS:
        d = root / oid
        d.mkdir(parents=True)
        for view in VIEWS:
            _write_view(d / f"{view}.png", rng)
    # byte-identical images must come out as identical feature rows
    shutil.copyfile(root / "green_block" / "front.png",
                    root / "green_block" / "top-down.png")


def build_catalog(path) -> None:
    lines = ["version 1"]
    for oid in OBJECTS:
        lines.append(f"object {oid} fold=train container=0")
    for oid, exprs in OBJECTS.items():
        for expr in exprs:
            lines.append(f"expr {oid} {expr}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def token_table() -> dict[str, np.ndarray]:
    vocab = sorted({t for exprs in OBJECTS.values() for e in exprs
                    for t in e.lower().split()} - {OOV_TOKEN})
    rng = np.random.default_rng(99)
    return {t: rng.normal(size=D_L).astype(np.float32) for t in vocab}


def build_vectors(path, table) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for token, vec in table.items():
            f.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")
