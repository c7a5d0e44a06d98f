from . import functional
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .gradcheck import finite_diff_check
from .optim import AdamState, adam_step, zero_grads
from .tensor import ShapeError, Tensor, backward

__all__ = [
    "AdamState",
    "CheckpointError",
    "ShapeError",
    "Tensor",
    "adam_step",
    "backward",
    "finite_diff_check",
    "functional",
    "load_arrays",
    "save_arrays",
    "zero_grads",
]
