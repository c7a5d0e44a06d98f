"""Differentiable ops: convolution, pooling, linear, activations, losses.

Spatial ops take a single sample ``(C, H, W)`` or a batch ``(N, C, H, W)``;
``linear``/``cross_entropy`` likewise accept ``(n,)`` or ``(N, n)``. Batched
calls are elementwise-parallel over the leading axis and exist so training
can amortize numpy dispatch over a minibatch.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, accumulate_grad, from_op


# ---------------------------------------------------------------------------
# elementwise / reshaping
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes differ: {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def _backward(g):
        accumulate_grad(a, g)
        accumulate_grad(b, g)

    return from_op(out_data, (a, b), _backward)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"elementwise_mul shapes differ: {a.data.shape} vs {b.data.shape}")
    out_data = a.data * b.data

    def _backward(g):
        accumulate_grad(a, g * b.data)
        accumulate_grad(b, g * a.data)

    return from_op(out_data, (a, b), _backward)


def scale(a: Tensor, factor: float) -> Tensor:
    out_data = a.data * factor

    def _backward(g):
        accumulate_grad(a, g * factor)

    return from_op(out_data, (a,), _backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def _backward(g):
        # subgradient at exactly 0 is 0
        accumulate_grad(a, g * (a.data > 0))

    return from_op(out_data, (a,), _backward)


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    sa, sb = list(a.data.shape), list(b.data.shape)
    if len(sa) != len(sb):
        raise ShapeError(f"concat rank mismatch: {a.data.shape} vs {b.data.shape}")
    ax = axis % len(sa)
    sa[ax] = sb[ax] = 0
    if sa != sb:
        raise ShapeError(
            f"concat non-axis dims differ on axis {axis}: {a.data.shape} vs {b.data.shape}"
        )
    out_data = np.concatenate((a.data, b.data), axis=ax)
    split = a.data.shape[ax]

    def _backward(g):
        ga, gb = np.split(g, [split], axis=ax)
        accumulate_grad(a, ga)
        accumulate_grad(b, gb)

    return from_op(out_data, (a, b), _backward)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)
    in_shape = a.data.shape

    def _backward(g):
        accumulate_grad(a, g.reshape(in_shape))

    return from_op(out_data, (a,), _backward)


def sum_all(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def _backward(g):
        accumulate_grad(a, np.broadcast_to(g, a.data.shape))

    return from_op(out_data, (a,), _backward)


def dropout(a: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ValueError("training-mode dropout needs a seeded rng")
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype)
    scale_f = np.asarray(1.0 / (1.0 - p), dtype=a.data.dtype)
    mask = keep * scale_f
    out_data = a.data * mask

    def _backward(g):
        accumulate_grad(a, g * mask)

    return from_op(out_data, (a,), _backward)


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """out = weight @ x + bias for a vector, row-wise for a batch."""
    if weight.data.ndim != 2:
        raise ShapeError(f"linear weight must be 2-d, got {weight.data.shape}")
    m, n = weight.data.shape
    if bias.data.shape != (m,):
        raise ShapeError(f"linear bias shape {bias.data.shape} != ({m},)")
    if x.data.ndim == 1:
        if x.data.shape[0] != n:
            raise ShapeError(f"linear input {x.data.shape} incompatible with weight {weight.data.shape}")
        out_data = weight.data @ x.data + bias.data

        def _backward(g):
            accumulate_grad(weight, np.outer(g, x.data))
            accumulate_grad(bias, g)
            accumulate_grad(x, weight.data.T @ g)

        return from_op(out_data, (x, weight, bias), _backward)

    if x.data.ndim == 2:
        if x.data.shape[1] != n:
            raise ShapeError(f"linear input {x.data.shape} incompatible with weight {weight.data.shape}")
        out_data = x.data @ weight.data.T + bias.data

        def _backward(g):
            accumulate_grad(weight, g.T @ x.data)
            accumulate_grad(bias, g.sum(axis=0))
            accumulate_grad(x, g @ weight.data)

        return from_op(out_data, (x, weight, bias), _backward)

    raise ShapeError(f"linear input must be 1-d or 2-d, got {x.data.shape}")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _out_len(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, int, int]:
    """(N, C, Hp, Wp) -> (N, C*k*k, Ho*Wo) patch matrix."""
    n, c, hp, wp = x.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * k * k, ho * wo), ho, wo


def _col2im(dcols: np.ndarray, shape: tuple, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add inverse of _im2col back onto the padded input shape."""
    n, c, hp, wp = shape
    dx = np.zeros(shape, dtype=dcols.dtype)
    dc = dcols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            dx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dc[:, :, i, j]
    return dx


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation with square kernels, differentiable in all inputs."""
    if stride <= 0 or padding < 0:
        raise ValueError(f"conv2d needs stride > 0 and padding >= 0, got {stride}, {padding}")
    if weight.data.ndim != 4 or weight.data.shape[2] != weight.data.shape[3]:
        raise ShapeError(f"conv2d weight must be (C_out, C_in, k, k), got {weight.data.shape}")
    c_out, c_in, k, _ = weight.data.shape
    if bias.data.shape != (c_out,):
        raise ShapeError(f"conv2d bias shape {bias.data.shape} != ({c_out},)")

    batched = x.data.ndim == 4
    if not batched and x.data.ndim != 3:
        raise ShapeError(f"conv2d input must be (C,H,W) or (N,C,H,W), got {x.data.shape}")
    xb = x.data if batched else x.data[None]
    n, c, h, w = xb.shape
    if c != c_in:
        raise ShapeError(f"conv2d input has {c} channels but weight expects {c_in}")
    if k > h + 2 * padding or k > w + 2 * padding:
        raise ShapeError(f"kernel {k} exceeds padded input {h + 2 * padding}x{w + 2 * padding}")

    if padding:
        xb = np.pad(xb, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols, ho, wo = _im2col(xb, k, stride)
    w2 = weight.data.reshape(c_out, c_in * k * k)
    out = np.matmul(w2, cols).reshape(n, c_out, ho, wo) + bias.data[None, :, None, None]
    padded_shape = xb.shape

    def _backward(g):
        gb = g if batched else g[None]
        g2 = gb.reshape(n, c_out, ho * wo)
        accumulate_grad(bias, gb.sum(axis=(0, 2, 3)))
        accumulate_grad(
            weight, np.einsum("ncl,nkl->ck", g2, cols).reshape(weight.data.shape)
        )
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2)
            dx = _col2im(dcols, padded_shape, k, stride, ho, wo)
            if padding:
                dx = dx[:, :, padding:-padding, padding:-padding]
            accumulate_grad(x, dx if batched else dx[0])

    return from_op(out if batched else out[0], (x, weight, bias), _backward)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def _check_pool_args(x: Tensor, k: int, stride: int) -> tuple[np.ndarray, bool]:
    if k <= 0 or stride <= 0:
        raise ValueError(f"pool needs k > 0 and stride > 0, got k={k}, stride={stride}")
    batched = x.data.ndim == 4
    if not batched and x.data.ndim != 3:
        raise ShapeError(f"pool input must be (C,H,W) or (N,C,H,W), got {x.data.shape}")
    xb = x.data if batched else x.data[None]
    h, w = xb.shape[2:]
    if k > h or k > w:
        raise ShapeError(f"pool window {k} exceeds input {h}x{w}")
    return xb, batched


def max_pool2d(x: Tensor, k: int, stride: int) -> Tensor:
    """Window max; gradient routes to the first row-major argmax per window."""
    xb, batched = _check_pool_args(x, k, stride)
    n, c, h, w = xb.shape
    ho, wo = _out_len(h, k, stride, 0), _out_len(w, k, stride, 0)

    cols, _, _ = _im2col(xb, k, stride)                 # (N, C*k*k, L)
    windows = cols.reshape(n, c, k * k, ho * wo)
    arg = windows.argmax(axis=2)                        # first max in row-major window scan
    out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
    out = out.reshape(n, c, ho, wo)

    def _backward(g):
        gb = (g if batched else g[None]).reshape(n, c, ho * wo)
        dwin = np.zeros((n, c, k * k, ho * wo), dtype=gb.dtype)
        np.put_along_axis(dwin, arg[:, :, None, :], gb[:, :, None, :], axis=2)
        dx = _col2im(dwin.reshape(n, c * k * k, ho * wo), xb.shape, k, stride, ho, wo)
        accumulate_grad(x, dx if batched else dx[0])

    return from_op(out if batched else out[0], (x,), _backward)


def avg_pool2d(x: Tensor, k: int, stride: int) -> Tensor:
    """Window mean; gradient spreads 1/k^2 to each window cell."""
    xb, batched = _check_pool_args(x, k, stride)
    n, c, h, w = xb.shape

    if stride == k and h % k == 0 and w % k == 0:
        # non-overlapping tiling: pure reshape, no patch matrix
        ho, wo = h // k, w // k
        out = xb.reshape(n, c, ho, k, wo, k).mean(axis=(3, 5))

        def _backward_fast(g):
            gb = g if batched else g[None]
            dx = np.repeat(np.repeat(gb, k, axis=2), k, axis=3) / (k * k)
            dx = dx.astype(xb.dtype, copy=False)
            accumulate_grad(x, dx if batched else dx[0])

        return from_op(out if batched else out[0], (x,), _backward_fast)

    ho, wo = _out_len(h, k, stride, 0), _out_len(w, k, stride, 0)
    cols, _, _ = _im2col(xb, k, stride)
    out = cols.reshape(n, c, k * k, ho * wo).mean(axis=2).reshape(n, c, ho, wo)

    def _backward(g):
        gb = (g if batched else g[None]).reshape(n, c, 1, ho * wo)
        dwin = np.broadcast_to(gb / (k * k), (n, c, k * k, ho * wo))
        dx = _col2im(dwin.reshape(n, c * k * k, ho * wo), xb.shape, k, stride, ho, wo)
        accumulate_grad(x, dx if batched else dx[0])

    return from_op(out if batched else out[0], (x,), _backward)


def avg_pool_array(x: np.ndarray, k: int) -> np.ndarray:
    """Grad-free non-overlapping mean pool over the trailing two axes."""
    *lead, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by pool size {k}")
    return x.reshape(*lead, h // k, k, w // k, k).mean(axis=(-3, -1))


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, label) -> Tensor:
    """Negative log softmax at the true class, stabilized by max-subtraction.

    Single form: logits (K,), integer label. Batched form: logits (N, K),
    labels (N,); returns the mean of per-sample losses.
    """
    if logits.data.ndim == 1:
        k = logits.data.shape[0]
        label = int(label)
        if not 0 <= label < k:
            raise ValueError(f"label {label} out of range for {k} classes")
        z = logits.data - logits.data.max()
        lse = np.log(np.exp(z).sum())
        out = np.asarray(lse - z[label], dtype=logits.data.dtype)

        def _backward(g):
            p = np.exp(z - lse)
            p[label] -= 1.0
            accumulate_grad(logits, p * g)

        return from_op(out, (logits,), _backward)

    if logits.data.ndim == 2:
        n, k = logits.data.shape
        labels = np.asarray(label, dtype=np.int64)
        if labels.shape != (n,):
            raise ShapeError(f"labels shape {labels.shape} != ({n},)")
        if labels.min() < 0 or labels.max() >= k:
            raise ValueError(f"labels out of range for {k} classes")
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1))
        per = lse - z[np.arange(n), labels]
        out = np.asarray(per.mean(), dtype=logits.data.dtype)

        def _backward(g):
            p = np.exp(z - lse[:, None])
            p[np.arange(n), labels] -= 1.0
            accumulate_grad(logits, p * (g / n))

        return from_op(out, (logits,), _backward)

    raise ShapeError(f"cross_entropy logits must be 1-d or 2-d, got {logits.data.shape}")
