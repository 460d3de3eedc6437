from .tensor import Gradients, NonFiniteError, Tape, Tensor, backward
from .ops import dropout, matmul, nonlinearity, softmax_stable
from .optim import AdamState, adam_step, glorot_init, param_rng
from .gradcheck import GradCheckResult, finite_diff_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "AdamState", "GradCheckResult", "Gradients", "NonFiniteError", "Tape", "Tensor",
    "adam_step", "backward", "dropout", "finite_diff_check", "glorot_init", "load_checkpoint",
    "matmul", "nonlinearity", "param_rng", "save_checkpoint", "softmax_stable",
]
