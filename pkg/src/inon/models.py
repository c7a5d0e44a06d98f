"""The three classifier architectures and their shared plumbing.

``ego``      scene differences only: two conv branches (color, depth) whose
             reduced outputs are multiplied, then a small FC head.
``ego_obj``  the ego pipeline plus a static object pathway: vision and
             language embedding deltas are each projected to the hidden size,
             multiplied, and concatenated with the ego penultimate vector
             before the final layer.
``obj_only`` the object pathway alone with its own head; trained on the
             all-pairs auxiliary task and used as a pretraining source.

Parameters are plain named Tensors. Names are stable; checkpoints and
transfer rely on them:

    conv_rgb.conv{1,2,3}.{weight,bias}    conv_rgb.reduce.{weight,bias}
    conv_depth.conv{1,2,3}.{weight,bias}  conv_depth.reduce.{weight,bias}
    fc_head.hidden.{weight,bias}          fc_head.out.{weight,bias}
    proj_vision.{weight,bias}             proj_language.{weight,bias}

Every forward accepts the single-sample shapes from the pipeline types or a
leading batch dimension on raw arrays; training at batch size >1 is just the
batched call.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .autograd import ShapeError, Tensor
from .autograd import functional as F
from .autograd.checkpoint import load_arrays, save_arrays
from .embeddings import PairEmbedding
from .scene import DELTA_H, DELTA_W, FrameDelta

KINDS = ("ego", "ego_obj", "obj_only")
RELATIONS = ("in", "on")

RGB_CHANNELS = 4
DEPTH_CHANNELS = 1
N_CLASSES = 2
# three k=2 s=2 max pools: 48x64 -> 24x32 -> 12x16 -> 6x8
FEAT_H, FEAT_W = DELTA_H // 8, DELTA_W // 8


class TransferError(ValueError):
    """Pretrained projection weights do not fit the destination model."""


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    relation: str
    base_filters: int = 8
    hidden: int = 64
    dropout_p: float = 0.3
    seed: int = 0
    vision_dim: int = 0
    language_dim: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}, got {self.relation!r}")
        if self.base_filters < 1 or self.hidden < 1:
            raise ValueError("base_filters and hidden must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0,1), got {self.dropout_p}")
        if self.kind in ("ego_obj", "obj_only") and (self.vision_dim < 1 or self.language_dim < 1):
            raise ValueError(f"{self.kind} needs vision_dim and language_dim")


@dataclass(frozen=True)
class AblationMask:
    """Which input modalities stay live. False zeroes that modality's input
    tensors at both training and inference time."""

    ego: bool = True
    language: bool = True
    vision: bool = True

    def __post_init__(self):
        if not (self.ego or self.language or self.vision):
            raise ValueError("at least one modality must stay active")

    def label(self) -> str:
        parts = [n for n, on in (("ego", self.ego), ("lang", self.language), ("vis", self.vision)) if on]
        return "+".join(parts)


FULL_MASK = AblationMask()


def _rng_for(seed: int, name: str) -> np.random.Generator:
    # one stream per parameter, keyed by name: models sharing a group name
    # and seed initialize that group identically regardless of kind
    return np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(name.encode()))))


def _uniform_fan_in(seed: int, name: str, shape: tuple, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    data = _rng_for(seed, name).uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def _zero_bias(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _conv_branch_params(prefix: str, in_ch: int, spec: ModelSpec, dtype) -> dict[str, Tensor]:
    f = spec.base_filters
    widths = [(f, in_ch), (2 * f, f), (4 * f, 2 * f)]
    params = {}
    for i, (c_out, c_in) in enumerate(widths, start=1):
        wname = f"{prefix}.conv{i}.weight"
        params[wname] = _uniform_fan_in(spec.seed, wname, (c_out, c_in, 3, 3), c_in * 9, dtype)
        params[f"{prefix}.conv{i}.bias"] = _zero_bias(c_out, dtype)
    flat = 4 * f * FEAT_H * FEAT_W
    wname = f"{prefix}.reduce.weight"
    params[wname] = _uniform_fan_in(spec.seed, wname, (spec.hidden, flat), flat, dtype)
    params[f"{prefix}.reduce.bias"] = _zero_bias(spec.hidden, dtype)
    return params


def init_params(spec: ModelSpec, dtype=np.float32) -> dict[str, Tensor]:
    """Build the named parameter dict for a spec. Deterministic per seed."""
    params: dict[str, Tensor] = {}
    h = spec.hidden
    if spec.kind in ("ego", "ego_obj"):
        params.update(_conv_branch_params("conv_rgb", RGB_CHANNELS, spec, dtype))
        params.update(_conv_branch_params("conv_depth", DEPTH_CHANNELS, spec, dtype))
    if spec.kind in ("ego_obj", "obj_only"):
        params["proj_vision.weight"] = _uniform_fan_in(
            spec.seed, "proj_vision.weight", (h, spec.vision_dim), spec.vision_dim, dtype)
        params["proj_vision.bias"] = _zero_bias(h, dtype)
        params["proj_language.weight"] = _uniform_fan_in(
            spec.seed, "proj_language.weight", (h, spec.language_dim), spec.language_dim, dtype)
        params["proj_language.bias"] = _zero_bias(h, dtype)
    params["fc_head.hidden.weight"] = _uniform_fan_in(
        spec.seed, "fc_head.hidden.weight", (h, h), h, dtype)
    params["fc_head.hidden.bias"] = _zero_bias(h, dtype)
    out_in = 2 * h if spec.kind == "ego_obj" else h
    params["fc_head.out.weight"] = _uniform_fan_in(
        spec.seed, "fc_head.out.weight", (N_CLASSES, out_in), out_in, dtype)
    params["fc_head.out.bias"] = _zero_bias(N_CLASSES, dtype)
    return params


def parameter_groups(params: dict[str, Tensor]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for name in params:
        groups.setdefault(name.split(".")[0], []).append(name)
    return groups


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _as_input(arr, dtype) -> Tensor:
    if isinstance(arr, Tensor):
        return arr
    return Tensor(np.asarray(arr, dtype=dtype))


def _delta_arrays(delta) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(delta, FrameDelta):
        return delta.rgb_delta, delta.depth_delta
    rgb, depth = delta
    return np.asarray(rgb), np.asarray(depth)


def _pair_arrays(pair) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pair, PairEmbedding):
        return pair.vision_delta, pair.language_delta
    vis, lang = pair
    return np.asarray(vis), np.asarray(lang)


def _check_spatial(name: str, arr: np.ndarray, channels: int) -> None:
    if arr.ndim not in (3, 4) or arr.shape[-3:] != (channels, DELTA_H, DELTA_W):
        raise ShapeError(
            f"{name} must be ({channels},{DELTA_H},{DELTA_W}) with optional batch dim, got {arr.shape}"
        )


def _conv_branch(params: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    h = x
    for i in (1, 2, 3):
        h = F.conv2d(h, params[f"{prefix}.conv{i}.weight"], params[f"{prefix}.conv{i}.bias"], 1, 1)
        h = F.relu(h)
        h = F.max_pool2d(h, 2, 2)
    flat = int(np.prod(h.shape[-3:]))
    shape = (h.shape[0], flat) if h.data.ndim == 4 else (flat,)
    h = F.relu(F.linear(h.reshape(shape), params[f"{prefix}.reduce.weight"], params[f"{prefix}.reduce.bias"]))
    return h


def _ego_penultimate(params, rgb, depth, dropout_p, training, rng) -> Tensor:
    rgb_vec = _conv_branch(params, "conv_rgb", rgb)
    depth_vec = _conv_branch(params, "conv_depth", depth)
    fused = F.elementwise_mul(rgb_vec, depth_vec)
    hid = F.relu(F.linear(fused, params["fc_head.hidden.weight"], params["fc_head.hidden.bias"]))
    return F.dropout(hid, dropout_p, training, rng)


def _object_vector(params, vis: Tensor, lang: Tensor) -> Tensor:
    v = F.relu(F.linear(vis, params["proj_vision.weight"], params["proj_vision.bias"]))
    l = F.relu(F.linear(lang, params["proj_language.weight"], params["proj_language.bias"]))
    return F.elementwise_mul(v, l)


def ego_forward(params: dict[str, Tensor], delta, *, dropout_p: float = 0.3,
                training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Scene-only classifier. Returns 2 logits (batched: (N,2))."""
    rgb, depth = _delta_arrays(delta)
    _check_spatial("rgb_delta", rgb, RGB_CHANNELS)
    _check_spatial("depth_delta", depth, DEPTH_CHANNELS)
    dtype = params["fc_head.out.weight"].dtype
    penult = _ego_penultimate(params, _as_input(rgb, dtype), _as_input(depth, dtype), dropout_p, training, rng)
    return F.linear(penult, params["fc_head.out.weight"], params["fc_head.out.bias"])


def ego_obj_forward(params: dict[str, Tensor], delta, pair, mask: AblationMask = FULL_MASK, *,
                    dropout_p: float = 0.3, training: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
    """Fused classifier. Masked modalities are replaced by zero inputs."""
    rgb, depth = _delta_arrays(delta)
    vis, lang = _pair_arrays(pair)
    if not mask.ego:
        rgb, depth = np.zeros_like(rgb), np.zeros_like(depth)
    if not mask.vision:
        vis = np.zeros_like(vis)
    if not mask.language:
        lang = np.zeros_like(lang)
    _check_spatial("rgb_delta", rgb, RGB_CHANNELS)
    _check_spatial("depth_delta", depth, DEPTH_CHANNELS)
    dtype = params["fc_head.out.weight"].dtype
    penult = _ego_penultimate(params, _as_input(rgb, dtype), _as_input(depth, dtype), dropout_p, training, rng)
    obj = _object_vector(params, _as_input(vis, dtype), _as_input(lang, dtype))
    both = F.concat(penult, obj, axis=-1)
    return F.linear(both, params["fc_head.out.weight"], params["fc_head.out.bias"])


def obj_only_forward(params: dict[str, Tensor], pair, mask: AblationMask = FULL_MASK, *,
                     dropout_p: float = 0.3, training: bool = False,
                     rng: np.random.Generator | None = None) -> Tensor:
    """Object-pathway classifier for the all-pairs auxiliary task."""
    if not (mask.language or mask.vision):
        raise ValueError("obj_only needs language or vision active in the mask")
    vis, lang = _pair_arrays(pair)
    if not mask.vision:
        vis = np.zeros_like(vis)
    if not mask.language:
        lang = np.zeros_like(lang)
    dtype = params["fc_head.out.weight"].dtype
    obj = _object_vector(params, _as_input(vis, dtype), _as_input(lang, dtype))
    hid = F.relu(F.linear(obj, params["fc_head.hidden.weight"], params["fc_head.hidden.bias"]))
    hid = F.dropout(hid, dropout_p, training, rng)
    return F.linear(hid, params["fc_head.out.weight"], params["fc_head.out.bias"])


def forward(spec: ModelSpec, params: dict[str, Tensor], delta, pair,
            mask: AblationMask = FULL_MASK, *, training: bool = False,
            rng: np.random.Generator | None = None) -> Tensor:
    """Dispatch on spec.kind with the spec's dropout setting."""
    if spec.kind == "ego":
        return ego_forward(params, delta, dropout_p=spec.dropout_p, training=training, rng=rng)
    if spec.kind == "ego_obj":
        return ego_obj_forward(params, delta, pair, mask, dropout_p=spec.dropout_p,
                               training=training, rng=rng)
    return obj_only_forward(params, pair, mask, dropout_p=spec.dropout_p, training=training, rng=rng)


# ---------------------------------------------------------------------------
# transfer and checkpoints
# ---------------------------------------------------------------------------

TRANSFER_GROUPS = ("proj_vision", "proj_language")


def transfer_pretrained(source: dict[str, Tensor], dest: dict[str, Tensor]) -> dict[str, Tensor]:
    """Copy projection groups from a trained obj_only model into an ego_obj
    parameter dict. Returns a new dict; non-projection entries are the same
    Tensor objects as ``dest``."""
    out = dict(dest)
    for group in TRANSFER_GROUPS:
        for suffix in ("weight", "bias"):
            name = f"{group}.{suffix}"
            if name not in source:
                raise TransferError(f"source is missing {name}")
            if name not in dest:
                raise TransferError(f"destination has no {name}; not an object-pathway model?")
            if source[name].shape != dest[name].shape:
                raise TransferError(
                    f"{name}: source shape {source[name].shape} != dest shape {dest[name].shape}"
                )
            out[name] = Tensor(source[name].data.copy(), requires_grad=True)
    return out


def save_model(path, spec: ModelSpec, params: dict[str, Tensor], extra_meta: dict[str, str] | None = None) -> None:
    meta = {
        "kind": spec.kind,
        "relation": spec.relation,
        "base_filters": str(spec.base_filters),
        "hidden": str(spec.hidden),
        "dropout_p": repr(spec.dropout_p),
        "vision_dim": str(spec.vision_dim),
        "language_dim": str(spec.language_dim),
    }
    meta.update(extra_meta or {})
    save_arrays(path, {k: t.data for k, t in params.items()}, meta)


def load_model(path) -> tuple[dict[str, Tensor], dict[str, str]]:
    arrays, meta = load_arrays(path)
    params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    return params, meta
