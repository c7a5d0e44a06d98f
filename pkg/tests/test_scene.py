"""Capture loading and difference-image construction."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from inon.autograd import ShapeError
from inon.scene import (
    CaptureFormatError,
    Frame,
    FrameDelta,
    downsample,
    frame_delta,
    load_frame,
    load_trial_delta,
)


def write_capture(d, moment, rgb8, depth_mm):
    Image.fromarray(rgb8, mode="RGB").save(d / f"{moment}.rgb.png")
    (d / f"{moment}.depth.u16").write_bytes(depth_mm.astype("<u2").tobytes())


def flat_capture(gray=128, mm=1000):
    rgb8 = np.full((480, 640, 3), gray, dtype=np.uint8)
    depth = np.full((480, 640), mm, dtype=np.uint16)
    return rgb8, depth


def random_frame(seed):
    rng = np.random.default_rng(seed)
    return Frame(
        rgb=rng.random((3, 480, 640), dtype=np.float32),
        depth=rng.random((1, 480, 640), dtype=np.float32) * 2.0,
    )


class TestFrameType:
    def test_shape_enforced(self):
        with pytest.raises(ShapeError):
            Frame(rgb=np.zeros((3, 240, 320), dtype=np.float32), depth=np.zeros((1, 240, 320), dtype=np.float32))

    def test_rgb_range_enforced(self):
        bad = np.full((3, 480, 640), 1.5, dtype=np.float32)
        with pytest.raises(ValueError):
            Frame(rgb=bad, depth=np.zeros((1, 480, 640), dtype=np.float32))

    def test_negative_depth_rejected(self):
        with pytest.raises(ValueError):
            Frame(
                rgb=np.zeros((3, 480, 640), dtype=np.float32),
                depth=np.full((1, 480, 640), -1.0, dtype=np.float32),
            )


class TestLoadFrame:
    def test_round_trip_shapes_and_values(self, tmp_path):
        rgb8, depth = flat_capture(gray=51, mm=1500)  # 51/255 = 0.2 exactly
        write_capture(tmp_path, "pre", rgb8, depth)
        f = load_frame(tmp_path, "pre")
        assert f.rgb.shape == (3, 480, 640)
        assert f.depth.shape == (1, 480, 640)
        np.testing.assert_allclose(f.rgb, 0.2, atol=1e-7)
        np.testing.assert_allclose(f.depth, 1.5, atol=1e-7)

    def test_wrong_resolution_rejected(self, tmp_path):
        rgb8 = np.zeros((240, 320, 3), dtype=np.uint8)
        Image.fromarray(rgb8, mode="RGB").save(tmp_path / "pre.rgb.png")
        (tmp_path / "pre.depth.u16").write_bytes(b"\x00" * (480 * 640 * 2))
        with pytest.raises(CaptureFormatError, match="640x480"):
            load_frame(tmp_path, "pre")

    def test_truncated_depth_rejected(self, tmp_path):
        rgb8, depth = flat_capture()
        write_capture(tmp_path, "pre", rgb8, depth)
        (tmp_path / "pre.depth.u16").write_bytes(b"\x00" * 100)
        with pytest.raises(CaptureFormatError, match="bytes"):
            load_frame(tmp_path, "pre")

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_frame(tmp_path, "post")

    def test_garbage_png_rejected(self, tmp_path):
        (tmp_path / "pre.rgb.png").write_bytes(b"not a png at all")
        (tmp_path / "pre.depth.u16").write_bytes(b"\x00" * (480 * 640 * 2))
        with pytest.raises(CaptureFormatError):
            load_frame(tmp_path, "pre")

    def test_bad_moment_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="moment"):
            load_frame(tmp_path, "mid")

    def test_uniform_card_has_tiny_variance(self, tmp_path):
        rgb8, depth = flat_capture(gray=128)
        write_capture(tmp_path, "pre", rgb8, depth)
        f = load_frame(tmp_path, "pre")
        assert f.rgb.var(axis=(1, 2)).max() < 1e-3

    def test_depth_is_little_endian_millimeters(self, tmp_path):
        rgb8, depth = flat_capture()
        depth[0, 0] = 0x0102  # 258 mm; byte order on disk must be 02 01
        write_capture(tmp_path, "pre", rgb8, depth)
        raw = (tmp_path / "pre.depth.u16").read_bytes()
        assert raw[0:2] == b"\x02\x01"
        f = load_frame(tmp_path, "pre")
        assert f.depth[0, 0, 0] == pytest.approx(0.258)


class TestDownsample:
    def test_constant_image(self):
        out = downsample(np.full((2, 480, 640), 0.7, dtype=np.float32))
        assert out.shape == (2, 48, 64)
        np.testing.assert_allclose(out, 0.7, atol=1e-6)

    def test_block_of_1_to_100(self):
        img = np.zeros((1, 480, 640), dtype=np.float64)
        img[0, 20:30, 50:60] = np.arange(1, 101, dtype=np.float64).reshape(10, 10)
        out = downsample(img)
        # mean of 1..100 = 5050/100
        assert out[0, 2, 5] == pytest.approx(50.5)
        assert out.sum() == pytest.approx(50.5)

    def test_non_divisible_rejected(self):
        with pytest.raises(ShapeError):
            downsample(np.zeros((1, 475, 640)))

    @given(st.integers(0, 2**16))
    @settings(max_examples=10, deadline=None)
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((1, 480, 640))
        b = rng.random((1, 480, 640))
        np.testing.assert_allclose(downsample(a + b), downsample(a) + downsample(b), atol=1e-10)


class TestFrameDelta:
    def test_identity_scene_is_all_zero(self):
        f = random_frame(0)
        d = frame_delta(f, f)
        np.testing.assert_array_equal(d.rgb_delta, 0.0)
        np.testing.assert_array_equal(d.depth_delta, 0.0)

    def test_shapes(self):
        d = frame_delta(random_frame(1), random_frame(2))
        assert d.rgb_delta.shape == (4, 48, 64)
        assert d.depth_delta.shape == (1, 48, 64)

    def test_three_four_five_triple(self):
        # one full pooled block differs by (0.3, 0.4, 0.0) -> L2 cell 0.5
        rgb_pre = np.full((3, 480, 640), 0.2, dtype=np.float32)
        rgb_post = rgb_pre.copy()
        rgb_post[0, 0:10, 0:10] += 0.3
        rgb_post[1, 0:10, 0:10] += 0.4
        depth = np.ones((1, 480, 640), dtype=np.float32)
        d = frame_delta(Frame(rgb_pre, depth), Frame(rgb_post, depth))
        assert d.rgb_delta[3, 0, 0] == pytest.approx(0.5, abs=1e-6)
        assert d.rgb_delta[0, 0, 0] == pytest.approx(0.3, abs=1e-6)
        assert d.rgb_delta[1, 0, 0] == pytest.approx(0.4, abs=1e-6)
        assert d.rgb_delta[2, 0, 0] == pytest.approx(0.0, abs=1e-6)

    def test_l2_channel_nonnegative_and_consistent(self):
        d = frame_delta(random_frame(3), random_frame(4))
        assert (d.rgb_delta[3] >= 0).all()
        want = np.sqrt((d.rgb_delta[:3] ** 2).sum(axis=0))
        np.testing.assert_allclose(d.rgb_delta[3], want, atol=1e-6)

    @given(st.integers(0, 2**16))
    @settings(max_examples=10, deadline=None)
    def test_antisymmetry(self, seed):
        a, b = random_frame(seed), random_frame(seed + 1)
        fwd = frame_delta(a, b)
        rev = frame_delta(b, a)
        np.testing.assert_allclose(rev.rgb_delta[:3], -fwd.rgb_delta[:3], atol=1e-6)
        np.testing.assert_allclose(rev.depth_delta, -fwd.depth_delta, atol=1e-6)
        np.testing.assert_allclose(rev.rgb_delta[3], fwd.rgb_delta[3], atol=1e-6)

    @given(st.integers(0, 2**16), st.floats(0.05, 0.3))
    @settings(max_examples=10, deadline=None)
    def test_global_offset_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        rgb_a = rng.random((3, 480, 640), dtype=np.float32) * 0.5
        rgb_b = rng.random((3, 480, 640), dtype=np.float32) * 0.5
        dep_a = rng.random((1, 480, 640), dtype=np.float32)
        dep_b = rng.random((1, 480, 640), dtype=np.float32)
        base = frame_delta(Frame(rgb_a, dep_a), Frame(rgb_b, dep_b))
        lift = frame_delta(
            Frame(rgb_a + np.float32(c), dep_a + np.float32(c)),
            Frame(rgb_b + np.float32(c), dep_b + np.float32(c)),
        )
        np.testing.assert_allclose(lift.rgb_delta, base.rgb_delta, atol=1e-5)
        np.testing.assert_allclose(lift.depth_delta, base.depth_delta, atol=1e-5)

    def test_delta_type_validates_shape(self):
        with pytest.raises(ShapeError):
            FrameDelta(rgb_delta=np.zeros((3, 48, 64)), depth_delta=np.zeros((1, 48, 64)))


class TestTrialDelta:
    def test_block_appearing_confines_delta(self, tmp_path):
        rgb_pre, depth_pre = flat_capture(gray=100, mm=1200)
        rgb_post = rgb_pre.copy()
        depth_post = depth_pre.copy()
        # a 40x60 object appears with its corner at (120, 200)
        rgb_post[120:160, 200:260] = [200, 30, 30]
        depth_post[120:160, 200:260] = 900
        write_capture(tmp_path, "pre", rgb_pre, depth_pre)
        write_capture(tmp_path, "post", rgb_post, depth_post)
        d = load_trial_delta(tmp_path)
        mask = np.zeros((48, 64), dtype=bool)
        mask[12:16, 20:26] = True
        assert np.abs(d.rgb_delta[:, ~mask]).max() < 1e-6
        assert np.abs(d.rgb_delta[:, mask]).max() > 0.1
        assert np.abs(d.depth_delta[0][~mask]).max() < 1e-6
        # the object sits 0.3 m closer, covering whole pooled cells exactly
        np.testing.assert_allclose(d.depth_delta[0][mask], -0.3, atol=1e-6)
