"""Minimal reverse-mode autodiff with the layers the inpainting model needs."""

from .checkpoint import load_arrays, save_arrays
from .functional import (
    absolute,
    add,
    concat,
    dropout,
    elu,
    gelu,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    multi_head_attention,
    narrow,
    reshape,
    scale,
    softmax,
    softplus,
    sub,
    swapaxes,
    tensor_sum,
    transformer_block,
)
from .optim import Adam
from .tensor import (
    ParamStore,
    Tensor,
    as_tensor,
    default_dtype,
    finite_checks,
    grad_enabled,
    no_grad,
    set_default_dtype,
)

__all__ = [
    "Adam",
    "ParamStore",
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "concat",
    "default_dtype",
    "dropout",
    "elu",
    "finite_checks",
    "gelu",
    "grad_enabled",
    "layer_norm",
    "linear",
    "load_arrays",
    "matmul",
    "mean",
    "mul",
    "multi_head_attention",
    "narrow",
    "no_grad",
    "reshape",
    "save_arrays",
    "scale",
    "set_default_dtype",
    "softmax",
    "softplus",
    "sub",
    "swapaxes",
    "tensor_sum",
    "transformer_block",
]
