"""Dense float tensors with a dynamic reverse-mode gradient tape.

Every op builds the tape as it runs; ``backward`` on a scalar loss walks the
recorded graph once in reverse topological order. Tensors wrap row-major
numpy arrays (float32 for training, float64 for gradient checking).
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class Tensor:
    """A dense n-dimensional float array, optionally tracked on the tape.

    ``data`` is the numpy payload, ``grad`` the same-shape accumulator filled
    by ``backward`` (None until then). Ops never mutate their inputs; the
    optimizer mutates parameter ``data`` in place between forward passes.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, dtype=np.float32, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self) -> None:
        backward(self)

    # -- arithmetic sugar (thin wrappers over functional ops) -----------------

    def __add__(self, other):
        from . import functional as F

        return F.add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other):
        from . import functional as F

        return F.add(self, F.scale(_as_tensor(other, self.dtype), -1.0))

    def __neg__(self):
        from . import functional as F

        return F.scale(self, -1.0)

    def __mul__(self, other):
        from . import functional as F

        if isinstance(other, (int, float)):
            return F.scale(self, float(other))
        return F.elementwise_mul(self, other)

    __rmul__ = __mul__

    def sum(self):
        from . import functional as F

        return F.sum_all(self)

    def mean(self):
        from . import functional as F

        return F.scale(F.sum_all(self), 1.0 / self.data.size)

    def reshape(self, shape):
        from . import functional as F

        return F.reshape(self, shape)

    def __repr__(self) -> str:
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{grad})"


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def from_op(data: np.ndarray, parents: Iterable[Tensor], backward_fn) -> Tensor:
    """Wrap an op result, recording the tape edge only when a parent needs it.

    Dropping the edge for grad-free subgraphs keeps eval-mode forwards cheap.
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


_sweep = threading.local()


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Deposit gradient for ``t``: into the active backward sweep if one is
    running on this thread, otherwise straight into ``t.grad``."""
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        raise ShapeError(
            f"gradient shape {g.shape} does not match tensor shape {t.data.shape}"
        )
    live = getattr(_sweep, "grads", None)
    if live is not None:
        entry = live.get(id(t))
        if entry is None:
            # copy: the incoming buffer may alias an op workspace or be read-only
            live[id(t)] = (t, g.astype(t.data.dtype, copy=True))
        else:
            np.add(entry[1], g, out=entry[1], casting="unsafe")
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Each sweep propagates through its own gradient map and only then adds the
    results into ``grad``, so calling twice on one graph doubles every grad
    instead of compounding through stale intermediate values.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad; nothing to differentiate")

    # iterative topological order (graphs can be deep under long loops)
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))

    grads: dict[int, tuple[Tensor, np.ndarray]] = {}
    _sweep.grads = grads
    try:
        accumulate_grad(loss, np.ones_like(loss.data))
        for node in reversed(topo):
            entry = grads.get(id(node))
            if entry is not None and node._backward is not None:
                node._backward(entry[1])
    finally:
        _sweep.grads = None

    for t, g in grads.values():
        if t.grad is None:
            t.grad = g
        else:
            t.grad += g
