"""Deterministic synthetic datasets: rendered trials, embeddings, labels.

Every object gets latent attributes (size on a 0.05 m lattice, shape, color,
container flag). Labels follow a closed-form margin rule over the size
lattice, so the Bayes-optimal accuracy is 1.0 and tests can verify learned
models against exact arithmetic:

    in(g, t):  t is a container  and  size_g <= size_t - 0.15
    on(g, t):  size_g <= size_t + 0.15

Sizes are stored as integer lattice indices (idx * 0.05 m), which keeps the
rule's comparisons exact. Vision embeddings carry the latents in their
leading coordinates, so a fixed linear threshold on the pair delta
reproduces the labels (`closed_form_probe`).

Trials are flat-shaded shapes on a gray desk plane, rendered at capture
resolution. The grasped object lands inside the target for a yes `in`
outcome, atop it for a yes `on`, and beside it for a no.
"""
from __future__ import annotations

import os
import zlib
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .data import (
    ObjectCatalog,
    ObjectRecord,
    PairRecord,
    enumerate_pairs,
    manifest_to_text,
)
from .embeddings import write_store
from .scene import FRAME_H, FRAME_W

SIZE_STEP = 0.05
SIZE_IDX_MIN = 4      # 0.20 m
SIZE_IDX_MAX = 20     # 1.00 m
MARGIN_STEPS = 3      # 0.15 m margin in the label rules
PX_PER_METER = 90     # half-extent of a size-1.0 object in pixels
BESIDE_GAP_PX = 30
PLACE_JITTER_PX = 8
DESK_GRAY = 0.55
DESK_DEPTH = 1.0
N_COLORS = 6
PALETTE = (
    (0.85, 0.15, 0.15),
    (0.15, 0.65, 0.20),
    (0.15, 0.25, 0.85),
    (0.90, 0.80, 0.10),
    (0.75, 0.20, 0.80),
    (0.95, 0.55, 0.10),
)
SHAPES = ("rect", "ellipse")
ROBOT_PAIR_CAPS = {"train": 60, "dev": 25, "test": 25}
EXPRESSIONS_PER_OBJECT = 3
VIEW_JITTER = 0.02
FILLER_STD = 0.05   # keeps the planted attribute coordinates dominant
SPECKLE_FRACTION = 0.01


def _crc(s: str) -> int:
    return zlib.crc32(s.encode("utf-8"))


def _rng(*key) -> np.random.Generator:
    ints = tuple(_crc(k) if isinstance(k, str) else int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(ints))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_objects: int = 12
    container_fraction: float = 0.4
    relation: str = "in"
    difficulty: str = "separable"
    image_noise_sigma: float = 0.0
    embedding_dims: tuple[int, int] = (16, 8)

    def __post_init__(self):
        if self.n_objects < 4:
            raise ValueError("n_objects must be >= 4")
        if not 0.0 < self.container_fraction < 1.0:
            raise ValueError("container_fraction must be in (0, 1)")
        if self.relation not in ("in", "on"):
            raise ValueError("relation must be 'in' or 'on'")
        if self.difficulty not in ("separable", "noisy"):
            raise ValueError("difficulty must be 'separable' or 'noisy'")
        if self.image_noise_sigma < 0.0:
            raise ValueError("image_noise_sigma must be >= 0")
        d_v, d_l = self.embedding_dims
        if d_v < 4 or d_l < 3:
            raise ValueError("embedding dims too small to hold the latent attributes")


@dataclass(frozen=True)
class ObjectLatent:
    id: str
    fold: str
    size_idx: int
    shape: int        # index into SHAPES
    color: int        # index into PALETTE
    is_container: bool

    @property
    def size_m(self) -> float:
        return self.size_idx * SIZE_STEP

    @property
    def radius_px(self) -> int:
        return int(round(self.size_m * PX_PER_METER))


def closed_form_label(grasped: ObjectLatent, target: ObjectLatent, relation: str) -> str:
    if relation == "in":
        ok = target.is_container and grasped.size_idx <= target.size_idx - MARGIN_STEPS
    elif relation == "on":
        ok = grasped.size_idx <= target.size_idx + MARGIN_STEPS
    else:
        raise ValueError(f"unknown relation {relation!r}")
    return "yes" if ok else "no"


def closed_form_probe(vision_delta: np.ndarray, relation: str) -> str:
    """Label from the pair's mean-view vision delta alone.

    Coordinate 0 of every vision embedding is the latent size in meters, so
    delta[0] = size_g - size_t. The decision thresholds sit halfway between
    lattice points, leaving 0.025 m of slack on either side; view jitter is
    constructed to cancel in the mean, so the comparison never lands on the
    boundary.
    """
    half_step = SIZE_STEP / 2
    margin = MARGIN_STEPS * SIZE_STEP
    if relation == "in":
        return "yes" if vision_delta[0] <= -margin + half_step else "no"
    return "yes" if vision_delta[0] <= margin + half_step else "no"


def latents(config: SynthConfig) -> dict[str, ObjectLatent]:
    """Latent attributes and fold assignment for every object, by id."""
    n = config.n_objects
    ids = [f"obj{i:02d}" for i in range(n)]
    rng = _rng(config.seed, "latents")
    order = rng.permutation(n)
    n_dev = max(1, round(0.2 * n))
    n_test = n_dev
    fold_of = {}
    for rank, obj_i in enumerate(order):
        if rank < n_dev:
            fold_of[ids[obj_i]] = "dev"
        elif rank < n_dev + n_test:
            fold_of[ids[obj_i]] = "test"
        else:
            fold_of[ids[obj_i]] = "train"
    sizes = rng.integers(SIZE_IDX_MIN, SIZE_IDX_MAX + 1, size=n)
    shapes = rng.integers(0, len(SHAPES), size=n)
    colors = rng.integers(0, N_COLORS, size=n)
    # container flags per fold so every fold can form `in` pairs
    by_fold: dict[str, list[str]] = {"train": [], "dev": [], "test": []}
    for oid in ids:
        by_fold[fold_of[oid]].append(oid)
    container_ids = set()
    for fold, members in by_fold.items():
        if not members:
            continue
        want = max(1, round(config.container_fraction * len(members)))
        picked = rng.permutation(len(members))[:want]
        container_ids.update(members[i] for i in picked)
    return {
        oid: ObjectLatent(
            id=oid,
            fold=fold_of[oid],
            size_idx=int(sizes[i]),
            shape=int(shapes[i]),
            color=int(colors[i]),
            is_container=oid in container_ids,
        )
        for i, oid in enumerate(ids)
    }


def expressions_for(latent: ObjectLatent) -> tuple[str, ...]:
    sz = f"sz{latent.size_idx:03d}"
    sh = f"sh{latent.shape}"
    co = f"co{latent.color}"
    return (f"{sz} {sh} {co}", f"{sh} {co}", sz)


def token_vector(token: str, d_l: int) -> np.ndarray:
    """Seed-independent lexicon: a hashed random direction, with the latent
    value planted in a fixed coordinate per attribute kind."""
    vec = _rng("lex", token).normal(0.0, FILLER_STD, size=d_l)
    if token.startswith("sz") and token[2:].isdigit():
        vec[0] = int(token[2:]) * SIZE_STEP
    elif token.startswith("sh") and token[2:].isdigit():
        vec[1] = 1.0 + int(token[2:])
    elif token.startswith("co") and token[2:].isdigit():
        vec[2] = (1 + int(token[2:])) / (1 + N_COLORS)
    return vec.astype(np.float32)


def vision_views(config: SynthConfig, latent: ObjectLatent) -> np.ndarray:
    d_v = config.embedding_dims[0]
    base = _rng(config.seed, "vision", latent.id).normal(0.0, FILLER_STD, size=d_v)
    base[0] = latent.size_m
    base[1] = 1.0 + latent.shape
    base[2] = 1.0 if latent.is_container else 0.0
    base[3] = (1 + latent.color) / (1 + N_COLORS)
    jrng = _rng(config.seed, "views", latent.id)
    if config.difficulty == "separable":
        j = jrng.normal(0.0, VIEW_JITTER, size=(4, d_v))
        jitter = np.concatenate([j, -j.sum(axis=0, keepdims=True)], axis=0)
    else:
        jitter = jrng.normal(0.0, VIEW_JITTER, size=(5, d_v))
    return (base[None, :] + jitter).astype(np.float32)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def shape_mask(shape: int, cx: int, cy: int, r: int) -> np.ndarray:
    ys = np.arange(FRAME_H)[:, None]
    xs = np.arange(FRAME_W)[None, :]
    if SHAPES[shape] == "rect":
        return (np.abs(xs - cx) <= r) & (np.abs(ys - cy) <= r)
    return ((xs - cx) / r) ** 2 + ((ys - cy) / r) ** 2 <= 1.0


def _paint(rgb: np.ndarray, depth: np.ndarray, mask: np.ndarray, color, height: float):
    for ch in range(3):
        rgb[ch][mask] = color[ch]
    depth[0][mask] = DESK_DEPTH - height


@dataclass(frozen=True)
class TrialRender:
    pre_rgb: np.ndarray
    pre_depth: np.ndarray
    post_rgb: np.ndarray
    post_depth: np.ndarray
    target_mask: np.ndarray
    grasped_mask: np.ndarray


def render_trial(config: SynthConfig, pair: tuple[str, str], outcome: str,
                 trial_index: int, relation: str | None = None) -> TrialRender:
    if outcome not in ("yes", "no"):
        raise ValueError("outcome must be 'yes' or 'no'")
    relation = config.relation if relation is None else relation
    table = latents(config)
    g, t = table[pair[0]], table[pair[1]]
    rng = _rng(config.seed, "trial", pair[0], pair[1], relation,
               1 if outcome == "yes" else 0, trial_index)

    tcx, tcy = FRAME_W // 2, FRAME_H // 2
    r_t, r_g = t.radius_px, g.radius_px
    jx, jy = rng.integers(-PLACE_JITTER_PX, PLACE_JITTER_PX + 1, size=2)
    if outcome == "no":
        gcx, gcy = tcx + r_t + r_g + BESIDE_GAP_PX + int(jx), tcy + int(jy)
        g_height = 0.2 * g.size_m
    elif relation == "in":
        # keep the jittered grasped shape strictly inside the target mask
        slack = max(0, r_t - r_g - 2)
        gcx = tcx + int(np.clip(jx, -slack, slack))
        gcy = tcy + int(np.clip(jy, -slack, slack))
        g_height = 0.2 * t.size_m + 0.1 * g.size_m
    else:
        gcx, gcy = tcx + int(jx), tcy - r_t
        g_height = 0.2 * t.size_m + 0.2 * g.size_m

    target_mask = shape_mask(t.shape, tcx, tcy, r_t)
    grasped_mask = shape_mask(g.shape, gcx, gcy, r_g)

    pre_rgb = np.full((3, FRAME_H, FRAME_W), DESK_GRAY, dtype=np.float64)
    pre_depth = np.full((1, FRAME_H, FRAME_W), DESK_DEPTH, dtype=np.float64)
    _paint(pre_rgb, pre_depth, target_mask, PALETTE[t.color], 0.2 * t.size_m)
    post_rgb, post_depth = pre_rgb.copy(), pre_depth.copy()
    _paint(post_rgb, post_depth, grasped_mask, PALETTE[g.color], g_height)

    if config.image_noise_sigma > 0:
        pre_rgb += rng.normal(0.0, config.image_noise_sigma, pre_rgb.shape)
        post_rgb += rng.normal(0.0, config.image_noise_sigma, post_rgb.shape)
    if config.difficulty == "noisy":
        for d in (pre_depth, post_depth):
            holes = rng.random(d.shape) < SPECKLE_FRACTION
            d[holes] = 0.0
    np.clip(pre_rgb, 0.0, 1.0, out=pre_rgb)
    np.clip(post_rgb, 0.0, 1.0, out=post_rgb)
    return TrialRender(pre_rgb, pre_depth, post_rgb, post_depth, target_mask, grasped_mask)


def _write_capture(trial_dir: str, moment: str, rgb: np.ndarray, depth: np.ndarray):
    img = np.round(rgb * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(img, mode="RGB").save(os.path.join(trial_dir, f"{moment}.rgb.png"))
    mm = np.round(depth[0] * 1000.0).astype("<u2")
    with open(os.path.join(trial_dir, f"{moment}.depth.u16"), "wb") as f:
        f.write(mm.tobytes())


def generate_trial(config: SynthConfig, pair: tuple[str, str], outcome: str,
                   trial_index: int, root: str | os.PathLike,
                   relation: str | None = None) -> str:
    """Render one trial and write its capture files under ``root``.

    Returns the trial directory path relative to ``root`` (the form the
    manifest records).
    """
    relation = config.relation if relation is None else relation
    rel_dir = os.path.join("trials", f"{relation}_{pair[0]}_{pair[1]}", f"t{trial_index}")
    trial_dir = os.path.join(os.fspath(root), rel_dir)
    os.makedirs(trial_dir, exist_ok=True)
    r = render_trial(config, pair, outcome, trial_index, relation)
    _write_capture(trial_dir, "pre", r.pre_rgb, r.pre_depth)
    _write_capture(trial_dir, "post", r.post_rgb, r.post_depth)
    return rel_dir.replace(os.sep, "/")


# ---------------------------------------------------------------------------
# whole datasets
# ---------------------------------------------------------------------------

@dataclass
class GeneratedDataset:
    root: str
    manifest_path: str
    store_path: str
    catalog: ObjectCatalog
    pairs: list[PairRecord] = field(default_factory=list)


def _pick_robot_pairs(config: SynthConfig, fold: str,
                      labeled: list[tuple[tuple[str, str], str]]) -> list[tuple[str, str]]:
    """A label-stratified, deterministically shuffled subset of a fold's pairs."""
    cap = ROBOT_PAIR_CAPS[fold]
    rng = _rng(config.seed, "robot", fold, config.relation)
    pool = [labeled[i] for i in rng.permutation(len(labeled))]
    yes = [p for p, lab in pool if lab == "yes"]
    no = [p for p, lab in pool if lab == "no"]
    take_yes = min(len(yes), cap // 2)
    take_no = min(len(no), cap - take_yes)
    take_yes = min(len(yes), cap - take_no)  # backfill if `no` ran short
    chosen = yes[:take_yes] + no[:take_no]
    order = rng.permutation(len(chosen))
    return [chosen[i] for i in order]


def generate_dataset(config: SynthConfig, root: str | os.PathLike) -> GeneratedDataset:
    """Write manifest, trial tree, and embedding store under ``root``."""
    root = os.fspath(root)
    os.makedirs(root, exist_ok=True)
    table = latents(config)
    catalog = ObjectCatalog([
        ObjectRecord(oid, lat.fold, lat.is_container, expressions_for(lat))
        for oid, lat in table.items()
    ])

    pairs: list[PairRecord] = []
    for fold in ("train", "dev", "test"):
        domain = enumerate_pairs(catalog, fold, config.relation)
        labeled = [((g, t), closed_form_label(table[g], table[t], config.relation))
                   for g, t in domain]
        robot = set(_pick_robot_pairs(config, fold, labeled))
        for (g, t), label in labeled:
            if (g, t) in robot:
                trials = tuple(
                    generate_trial(config, (g, t), label, i, root)
                    for i in range(5)
                )
                pairs.append(PairRecord(g, t, config.relation, label, "robot", trials))
            else:
                pairs.append(PairRecord(g, t, config.relation, label, "annotation"))

    manifest_path = os.path.join(root, "manifest.txt")
    with open(manifest_path, "w", encoding="utf-8") as f:
        f.write(manifest_to_text(catalog, pairs))

    d_l = config.embedding_dims[1]
    vision = {oid: vision_views(config, lat) for oid, lat in table.items()}
    language = {
        oid: [[(tok, token_vector(tok, d_l)) for tok in expr.split()]
              for expr in expressions_for(lat)]
        for oid, lat in table.items()
    }
    store_path = os.path.join(root, "store.bin")
    write_store(store_path, vision, language, config.embedding_dims)
    return GeneratedDataset(root, manifest_path, store_path, catalog, pairs)
