"""Small dense reverse-mode autodiff engine on numpy arrays."""

from . import ops
from .gradcheck import GradCheckResult, grad_check
from .tensor import Tensor, as_tensor, backward, get_precision, grad_enabled, no_grad, precision, set_precision

__all__ = [
    "GradCheckResult",
    "Tensor",
    "as_tensor",
    "backward",
    "get_precision",
    "grad_check",
    "grad_enabled",
    "no_grad",
    "ops",
    "precision",
    "set_precision",
]
