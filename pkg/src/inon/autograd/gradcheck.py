"""Finite-difference gradient verification.

Everything here runs in float64: analytic gradients from a graph built on
float64 tensors are compared against central differences. The relative error
for one coordinate is |ga - gn| / max(1, |ga|, |gn|), so tiny gradients are
judged on absolute error and large ones on relative error.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def _numeric_grad_coord(fn: Callable[[], Tensor], arr: np.ndarray, idx, eps: float) -> float:
    orig = arr[idx]
    arr[idx] = orig + eps
    f_plus = float(fn().data)
    arr[idx] = orig - eps
    f_minus = float(fn().data)
    arr[idx] = orig
    return (f_plus - f_minus) / (2.0 * eps)


def _rel_err(ga: float, gn: float) -> float:
    return abs(ga - gn) / max(1.0, abs(ga), abs(gn))


def finite_diff_check(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-4,
    rng: np.random.Generator | None = None,
    max_coords_per_input: int | None = None,
) -> float:
    """Compare analytic and numeric gradients of a scalar-valued ``fn``.

    ``fn`` must rebuild the graph from the current contents of ``inputs``
    (their ``data`` arrays are perturbed in place between calls). Checks every
    coordinate unless ``max_coords_per_input`` caps it, in which case that many
    coordinates are sampled per input without replacement using ``rng``.
    Returns the worst relative error seen.
    """
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ValueError("finite_diff_check requires float64 inputs")
        t.grad = None
    out = fn()
    backward(out)
    analytic = []
    for t in inputs:
        if t.grad is None:
            raise ValueError("an input received no gradient; is it connected to the output?")
        analytic.append(t.grad.copy())

    worst = 0.0
    for t, ga in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords_per_input is not None and n > max_coords_per_input:
            if rng is None:
                raise ValueError("sampled checking needs an rng")
            coords = rng.choice(n, size=max_coords_per_input, replace=False)
        else:
            coords = range(n)
        ga_flat = ga.reshape(-1)
        for i in coords:
            gn = _numeric_grad_coord(fn, flat, int(i), eps)
            worst = max(worst, _rel_err(float(ga_flat[int(i)]), gn))
    return worst
