"""Scene capture loading and difference-image construction.

A trial is a pair of egocentric RGB-D captures, one before and one after the
arm acts. The model never sees the raw frames: it sees the downsampled
difference (three color channels plus an L2 magnitude channel, and a depth
channel). Everything here is a pure function over immutable inputs.

Capture layout on disk, one directory per trial:

    pre.rgb.png     8-bit RGB PNG, exactly 640x480
    pre.depth.u16   raw little-endian uint16, row-major, millimeters, 640x480
    post.rgb.png
    post.depth.u16

A depth value of 0 means the sensor returned nothing for that pixel.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .autograd import ShapeError
from .autograd.functional import avg_pool_array

FRAME_H, FRAME_W = 480, 640
POOL = 10
DELTA_H, DELTA_W = FRAME_H // POOL, FRAME_W // POOL


class CaptureFormatError(ValueError):
    """A capture file exists but is not in the documented format."""


@dataclass(frozen=True)
class Frame:
    """One RGB-D capture. rgb is (3,480,640) in [0,1]; depth is (1,480,640)
    in meters with dropouts already mapped to 0."""

    rgb: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        if self.rgb.shape != (3, FRAME_H, FRAME_W):
            raise ShapeError(f"rgb shape {self.rgb.shape} != (3,{FRAME_H},{FRAME_W})")
        if self.depth.shape != (1, FRAME_H, FRAME_W):
            raise ShapeError(f"depth shape {self.depth.shape} != (1,{FRAME_H},{FRAME_W})")
        if self.rgb.min() < 0.0 or self.rgb.max() > 1.0:
            raise ValueError("rgb values must lie in [0,1]")
        if self.depth.min() < 0.0:
            raise ValueError("depth must be non-negative")


@dataclass(frozen=True)
class FrameDelta:
    """Downsampled scene difference. rgb_delta is (4,48,64): channels 0-2 are
    post-minus-pre color differences, channel 3 their per-pixel L2 norm.
    depth_delta is (1,48,64)."""

    rgb_delta: np.ndarray
    depth_delta: np.ndarray

    def __post_init__(self):
        if self.rgb_delta.shape != (4, DELTA_H, DELTA_W):
            raise ShapeError(f"rgb_delta shape {self.rgb_delta.shape} != (4,{DELTA_H},{DELTA_W})")
        if self.depth_delta.shape != (1, DELTA_H, DELTA_W):
            raise ShapeError(f"depth_delta shape {self.depth_delta.shape} != (1,{DELTA_H},{DELTA_W})")


def _load_rgb(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im)
    except FileNotFoundError:
        raise
    except OSError as e:
        raise CaptureFormatError(f"{path}: unreadable image ({e})") from e
    if arr.shape != (FRAME_H, FRAME_W, 3):
        raise CaptureFormatError(
            f"{path}: expected {FRAME_W}x{FRAME_H} RGB, got {arr.shape[1]}x{arr.shape[0]}"
        )
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)


def _load_depth(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    expect = FRAME_H * FRAME_W * 2
    if len(raw) != expect:
        raise CaptureFormatError(f"{path}: depth file is {len(raw)} bytes, expected {expect}")
    mm = np.frombuffer(raw, dtype="<u2").reshape(FRAME_H, FRAME_W)
    return (mm.astype(np.float32) / 1000.0)[None]


def load_frame(trial_dir: str | os.PathLike, moment: str) -> Frame:
    """Load the 'pre' or 'post' capture of a trial directory."""
    if moment not in ("pre", "post"):
        raise ValueError(f"moment must be 'pre' or 'post', got {moment!r}")
    trial_dir = os.fspath(trial_dir)
    rgb = _load_rgb(os.path.join(trial_dir, f"{moment}.rgb.png"))
    depth = _load_depth(os.path.join(trial_dir, f"{moment}.depth.u16"))
    return Frame(rgb=rgb, depth=depth)


def downsample(image: np.ndarray) -> np.ndarray:
    """10x10 stride-10 average pooling over the trailing two axes."""
    h, w = image.shape[-2:]
    if h % POOL or w % POOL:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by {POOL}")
    return avg_pool_array(image, POOL)


def frame_delta(pre: Frame, post: Frame) -> FrameDelta:
    """Difference first, then downsample, then the L2 channel over the
    downsampled color differences."""
    rgb_diff = downsample(post.rgb.astype(np.float32) - pre.rgb.astype(np.float32))
    l2 = np.sqrt((rgb_diff * rgb_diff).sum(axis=0, keepdims=True))
    depth_diff = downsample(post.depth.astype(np.float32) - pre.depth.astype(np.float32))
    return FrameDelta(
        rgb_delta=np.concatenate([rgb_diff, l2], axis=0),
        depth_delta=depth_diff,
    )


def load_trial_delta(trial_dir: str | os.PathLike) -> FrameDelta:
    """Convenience: load both captures of a trial and difference them."""
    return frame_delta(load_frame(trial_dir, "pre"), load_frame(trial_dir, "post"))
