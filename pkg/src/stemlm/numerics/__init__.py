from .tensor import (GraphError, NonFiniteError, Parameter, ShapeError, Tensor,
                     default_dtype, get_default_dtype, no_grad, set_default_dtype)
from . import ops
from .optim import (SGD, Adam, Optimizer, clip_grad_norm, make_optimizer, optimizer_from_state,
                    zero_grad)
from .gradcheck import grad_check

__all__ = [
    "Tensor", "Parameter", "GraphError", "NonFiniteError", "ShapeError",
    "default_dtype", "get_default_dtype", "no_grad", "set_default_dtype", "ops",
    "SGD", "Adam", "Optimizer", "clip_grad_norm", "make_optimizer", "optimizer_from_state", "zero_grad",
    "grad_check",
]
