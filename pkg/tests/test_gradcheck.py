"""Finite-difference verification of every differentiable op.

All checks run in float64. Ops with kinks (relu, max pool) get inputs nudged
away from the kink so the central difference is taken on a smooth patch.
"""
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from inon.autograd import Tensor, finite_diff_check
from inon.autograd import functional as F

EPS = 1e-4
TOL = 1e-4


def t64(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def away_from_zero(rng, shape, margin=0.2):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x) * margin + x, x)


def distinct_values(rng, shape, gap=0.05):
    """Values whose pairwise gaps exceed the finite-difference probe."""
    flat = np.arange(np.prod(shape), dtype=np.float64) * gap
    rng.shuffle(flat)
    return (flat + rng.normal(scale=gap / 10, size=flat.shape)).reshape(shape)


class TestElementwiseGrads:
    def test_add(self):
        rng = np.random.default_rng(0)
        a, b = t64(rng.normal(size=(3, 4))), t64(rng.normal(size=(3, 4)))
        assert finite_diff_check(lambda: (a + b).sum(), [a, b], EPS) < TOL

    def test_mul(self):
        rng = np.random.default_rng(1)
        a, b = t64(rng.normal(size=7)), t64(rng.normal(size=7))
        assert finite_diff_check(lambda: (a * b).sum(), [a, b], EPS) < TOL

    def test_scale(self):
        a = t64(np.random.default_rng(2).normal(size=5))
        assert finite_diff_check(lambda: (a * -2.5).sum(), [a], EPS) < TOL

    def test_relu(self):
        a = t64(away_from_zero(np.random.default_rng(3), (4, 4)))
        assert finite_diff_check(lambda: F.relu(a).sum(), [a], EPS) < TOL

    def test_concat(self):
        rng = np.random.default_rng(4)
        a, b = t64(rng.normal(size=3)), t64(rng.normal(size=5))
        w = Tensor(rng.normal(size=8))
        assert finite_diff_check(lambda: (F.concat(a, b) * w).sum(), [a, b], EPS) < TOL

    def test_reshape(self):
        a = t64(np.random.default_rng(5).normal(size=(2, 6)))
        w = Tensor(np.random.default_rng(6).normal(size=(3, 4)))
        assert finite_diff_check(lambda: (a.reshape((3, 4)) * w).sum(), [a], EPS) < TOL

    def test_mean(self):
        a = t64(np.random.default_rng(7).normal(size=9))
        assert finite_diff_check(lambda: a.mean(), [a], EPS) < TOL

    def test_dropout_with_replayed_mask(self):
        a = t64(np.random.default_rng(8).normal(size=20))
        # re-seeding per call replays the identical mask, making fn deterministic
        fn = lambda: F.dropout(a, 0.4, training=True, rng=np.random.default_rng(99)).sum()
        assert finite_diff_check(fn, [a], EPS) < TOL


class TestLayerGrads:
    def test_linear_all_inputs(self):
        rng = np.random.default_rng(10)
        x, w, b = t64(rng.normal(size=6)), t64(rng.normal(size=(4, 6))), t64(rng.normal(size=4))
        s = Tensor(rng.normal(size=4))
        assert finite_diff_check(lambda: (F.linear(x, w, b) * s).sum(), [x, w, b], EPS) < TOL

    def test_linear_batched(self):
        rng = np.random.default_rng(11)
        x, w, b = t64(rng.normal(size=(3, 5))), t64(rng.normal(size=(2, 5))), t64(rng.normal(size=2))
        assert finite_diff_check(lambda: F.linear(x, w, b).sum(), [x, w, b], EPS) < TOL

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
    def test_conv2d_all_inputs(self, stride, padding):
        rng = np.random.default_rng(12 + stride * 10 + padding)
        x = t64(rng.normal(size=(2, 5, 5)))
        w = t64(rng.normal(size=(3, 2, 3, 3)))
        b = t64(rng.normal(size=3))
        fn = lambda: F.conv2d(x, w, b, stride, padding).sum()
        assert finite_diff_check(fn, [x, w, b], EPS) < TOL

    def test_conv2d_batched(self):
        rng = np.random.default_rng(16)
        x = t64(rng.normal(size=(2, 1, 4, 4)))
        w = t64(rng.normal(size=(2, 1, 3, 3)))
        b = t64(rng.normal(size=2))
        fn = lambda: F.conv2d(x, w, b, 1, 1).sum()
        assert finite_diff_check(fn, [x, w, b], EPS) < TOL

    def test_max_pool(self):
        x = t64(distinct_values(np.random.default_rng(17), (2, 6, 6)))
        s = Tensor(np.random.default_rng(18).normal(size=(2, 3, 3)))
        fn = lambda: (F.max_pool2d(x, 2, 2) * s).sum()
        assert finite_diff_check(fn, [x], EPS) < TOL

    def test_max_pool_overlapping(self):
        x = t64(distinct_values(np.random.default_rng(19), (1, 5, 5)))
        fn = lambda: F.max_pool2d(x, 3, 2).sum()
        assert finite_diff_check(fn, [x], EPS) < TOL

    @pytest.mark.parametrize("k,stride,side", [
        (2, 2, 7),   # non-divisible: generic patch path
        (3, 2, 7),   # overlapping windows
        (2, 2, 6),   # divisible, stride == k: fast reshape path
    ])
    def test_avg_pool(self, k, stride, side):
        x = t64(np.random.default_rng(20 + k + side).normal(size=(2, side, side)))
        s_shape = F.avg_pool2d(Tensor(x.data), k, stride).shape
        s = Tensor(np.random.default_rng(30).normal(size=s_shape))
        fn = lambda: (F.avg_pool2d(x, k, stride) * s).sum()
        assert finite_diff_check(fn, [x], EPS) < TOL

    def test_avg_pool_fast_path_batched(self):
        x = t64(np.random.default_rng(33).normal(size=(2, 1, 4, 4)))
        fn = lambda: F.avg_pool2d(x, 2, 2).sum()
        assert finite_diff_check(fn, [x], EPS) < TOL

    def test_cross_entropy_single(self):
        x = t64(np.random.default_rng(21).normal(size=4))
        assert finite_diff_check(lambda: F.cross_entropy(x, 2), [x], EPS) < TOL

    def test_cross_entropy_batched(self):
        x = t64(np.random.default_rng(22).normal(size=(3, 2)))
        labels = np.array([0, 1, 1])
        assert finite_diff_check(lambda: F.cross_entropy(x, labels), [x], EPS) < TOL

    def test_composite_stack(self):
        # conv -> relu -> pool -> flatten -> linear -> cross entropy.
        # scan seeds until every pre-relu value clears the kink by a wide
        # margin, else the central difference straddles the non-smooth point
        for seed in range(23, 200):
            rng = np.random.default_rng(seed)
            x = t64(rng.normal(size=(1, 6, 6)))
            cw = t64(rng.normal(size=(2, 1, 3, 3)))
            cb = t64(rng.normal(size=2))
            lw = t64(rng.normal(size=(2, 2 * 3 * 3)) * 0.5)
            lb = t64(rng.normal(size=2))
            pre = F.conv2d(Tensor(x.data), Tensor(cw.data), Tensor(cb.data), 1, 1)
            if np.abs(pre.data).min() > 0.05:
                break
        else:
            pytest.fail("no kink-safe seed found")

        def fn():
            h = F.relu(F.conv2d(x, cw, cb, 1, 1))
            h = F.avg_pool2d(h, 2, 2)
            h = h.reshape((2 * 3 * 3,))
            return F.cross_entropy(F.linear(h, lw, lb), 1)

        assert finite_diff_check(fn, [x, cw, cb, lw, lb], EPS) < TOL


class TestCheckerItself:
    def test_constant_function_zero_both_ways(self):
        a = t64(np.ones(3))
        c = Tensor(np.zeros(3))
        # multiplying by a constant zero kills the gradient exactly
        assert finite_diff_check(lambda: (a * c).sum(), [a], EPS) == 0.0

    def test_rejects_float32(self):
        a = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        with pytest.raises(ValueError, match="float64"):
            finite_diff_check(lambda: a.sum(), [a], EPS)

    def test_detects_wrong_gradient(self):
        # a deliberately broken op: forward x^2, backward claims d/dx = 3x
        from inon.autograd.tensor import accumulate_grad, from_op

        def bad_square(t):
            def _backward(g):
                accumulate_grad(t, 3.0 * t.data * g)
            return from_op(t.data * t.data, (t,), _backward)

        a = t64(np.array([1.0, 2.0]))
        err = finite_diff_check(lambda: bad_square(a).sum(), [a], EPS)
        assert err > 0.1

    def test_sampled_mode_caps_work(self):
        rng = np.random.default_rng(31)
        a = t64(rng.normal(size=1000))
        err = finite_diff_check(
            lambda: (a * a).sum(), [a], EPS,
            rng=np.random.default_rng(0), max_coords_per_input=16,
        )
        assert err < TOL


@given(st.integers(0, 2**16))
@settings(max_examples=20, deadline=None)
def test_random_small_graphs(seed):
    """Twenty random two-layer graphs, full-coordinate checked."""
    rng = np.random.default_rng(seed)
    n_in, n_hid = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    x = t64(rng.normal(size=n_in))
    w1 = t64(rng.normal(size=(n_hid, n_in)))
    b1 = t64(away_from_zero(rng, n_hid))
    w2 = t64(rng.normal(size=(2, n_hid)))
    b2 = t64(rng.normal(size=2))
    # skip draws whose hidden pre-activation sits on the relu kink
    assume(np.abs(w1.data @ x.data + b1.data).min() > 0.01)

    def fn():
        h = F.relu(F.linear(x, w1, b1))
        return F.cross_entropy(F.linear(h, w2, b2), int(seed) % 2)

    assert finite_diff_check(fn, [x, w1, b1, w2, b2], EPS) < TOL
