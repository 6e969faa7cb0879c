"""Differentiable operations on :class:`~avsi.nn.tensor.Tensor`.

Each op computes its forward value with numpy and registers a closure
that maps the output gradient to parent gradients. Broadcasting follows
numpy rules; gradients of broadcast operands are summed back to the
operand's shape. Backward closures donate freshly allocated arrays to
the parent's gradient slot where safe, avoiding defensive copies on the
hot path.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf, expit

from ..exceptions import ConfigError, InvalidInput
from .tensor import Tensor, as_tensor, make_result

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        # the child's grad buffer may be donated to at most one parent
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape), fresh=True)
        if b.requires_grad:
            gb = _unbroadcast(g, b.data.shape)
            b.accumulate_grad(gb, fresh=(gb is not g) or (a.grad is not g))

    return make_result(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape), fresh=True)
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.data.shape), fresh=True)

    return make_result(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape), fresh=True)
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape), fresh=True)

    return make_result(out, (a, b), backward)


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    out = a.data * factor

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * factor, fresh=True)

    return make_result(out, (a,), backward)


def matmul(a, b) -> Tensor:
    """Matrix product; the last two axes multiply, leading axes broadcast.

    The common case of a stacked input against a 2-D weight is flattened
    into a single GEMM.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2:
        raise InvalidInput("matmul needs at least (1-D, 2-D) operands")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise InvalidInput(
            f"matmul inner dims disagree: {a.data.shape} @ {b.data.shape}"
        )
    flat = a.ndim > 2 and b.ndim == 2
    if flat:
        lead = a.data.shape[:-1]
        out = (a.data.reshape(-1, a.data.shape[-1]) @ b.data).reshape(
            *lead, b.data.shape[-1]
        )
    else:
        out = a.data @ b.data

    def backward(g):
        if flat:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                a.accumulate_grad((g2 @ b.data.T).reshape(a.data.shape), fresh=True)
            if b.requires_grad:
                b.accumulate_grad(
                    a.data.reshape(-1, a.data.shape[-1]).T @ g2, fresh=True
                )
        else:
            if a.requires_grad:
                ga = g @ np.swapaxes(b.data, -1, -2)
                a.accumulate_grad(_unbroadcast(ga, a.data.shape), fresh=True)
            if b.requires_grad:
                gb = np.swapaxes(a.data, -1, -2) @ g
                b.accumulate_grad(_unbroadcast(gb, b.data.shape), fresh=True)

    return make_result(out, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map along the last axis: ``x @ weight + bias``, fused."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.shape[-1] != weight.data.shape[0]:
        raise InvalidInput(
            f"linear inner dims disagree: {x.data.shape} @ {weight.data.shape}"
        )
    bias = as_tensor(bias) if bias is not None else None
    if bias is not None and bias.data.shape != (weight.data.shape[1],):
        raise InvalidInput("bias shape must be (fan_out,)")
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, x.data.shape[-1])
    out2 = x2 @ weight.data
    if bias is not None:
        out2 += bias.data
    out = out2.reshape(*lead, weight.data.shape[1])

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            x.accumulate_grad((g2 @ weight.data.T).reshape(x.data.shape), fresh=True)
        if weight.requires_grad:
            weight.accumulate_grad(x2.T @ g2, fresh=True)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g2.sum(axis=0), fresh=True)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.data.shape), fresh=g.flags.writeable)

    return make_result(out, (a,), backward)


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    out = np.swapaxes(a.data, axis1, axis2)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.ascontiguousarray(np.swapaxes(g, axis1, axis2)),
                              fresh=True)

    return make_result(out, (a,), backward)


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy(), fresh=True)

    return make_result(out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.data.shape[axis]
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def absolute(a) -> Tensor:
    """|a|; subgradient 0 at exactly zero."""
    a = as_tensor(a)
    out = np.abs(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * np.sign(a.data), fresh=True)

    return make_result(out, (a,), backward)


def gelu(a) -> Tensor:
    """Gaussian error linear unit, exact CDF form x * Phi(x)."""
    a = as_tensor(a)
    x = a.data
    cdf = erf(x * _INV_SQRT2)
    cdf += 1.0
    cdf *= 0.5
    out = x * cdf

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(x * x * -0.5)
            pdf *= _INV_SQRT2PI
            pdf *= x
            pdf += cdf
            pdf *= g
            a.accumulate_grad(pdf, fresh=True)

    return make_result(out, (a,), backward)


def elu(a) -> Tensor:
    """Exponential linear unit with alpha = 1."""
    a = as_tensor(a)
    x = a.data
    neg = np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0.0, x, neg)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * np.where(x > 0.0, 1.0, neg + 1.0), fresh=True)

    return make_result(out, (a,), backward)


def softplus(a) -> Tensor:
    """log(1 + exp(x)) with an overflow-safe formulation."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * expit(a.data), fresh=True)

    return make_result(out, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    y = a.data - a.data.max(axis=axis, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            t = g * y
            t -= y * t.sum(axis=axis, keepdims=True)
            a.accumulate_grad(t, fresh=True)

    return make_result(y, (a,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    xhat = x.data - x.data.mean(axis=-1, keepdims=True)
    var = np.mean(xhat * xhat, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat *= inv_std
    out = xhat * gain.data
    out += bias.data

    def backward(g):
        red = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            gain.accumulate_grad((g * xhat).sum(axis=red), fresh=True)
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=red), fresh=True)
        if x.requires_grad:
            gg = g * gain.data
            gg -= gg.mean(axis=-1, keepdims=True)
            gg -= xhat * (gg * xhat).mean(axis=-1, keepdims=True)
            gg *= inv_std
            x.accumulate_grad(gg, fresh=True)

    return make_result(out, (x, gain, bias), backward)


def dropout(x, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    if not (0.0 <= p < 1.0):
        raise InvalidInput("dropout probability must lie in [0, 1)")
    if rng is None:
        raise InvalidInput("training-mode dropout needs an explicit rng")
    keep = rng.random(x.data.shape, dtype=np.float32) >= p
    inv = 1.0 / (1.0 - p)
    out = x.data * keep
    out *= inv

    def backward(g):
        if x.requires_grad:
            gm = g * keep
            gm *= inv
            x.accumulate_grad(gm, fresh=True)

    return make_result(out, (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t.accumulate_grad(np.ascontiguousarray(g[tuple(index)]), fresh=True)

    return make_result(out, tuple(tensors), backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along one axis."""
    a = as_tensor(a)
    if start < 0 or start + length > a.data.shape[axis]:
        raise InvalidInput("narrow slice out of range")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = a.data[index]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            a.accumulate_grad(full, fresh=True)

    return make_result(out, (a,), backward)


def multi_head_attention(
    x,
    weights: dict,
    num_heads: int,
    dropout_p: float = 0.0,
    rng: np.random.Generator = None,
    training: bool = False,
) -> Tensor:
    """Scaled dot-product self-attention over the full sequence.

    ``x`` has shape ``(..., S, D)`` with ``D`` divisible by the head
    count; no causal mask is applied. ``weights`` holds the projections
    ``wq, bq, wk, bk, wv, bv, wo, bo``.
    """
    x = as_tensor(x)
    d_model = x.data.shape[-1]
    if d_model % num_heads != 0:
        raise ConfigError(f"d_model {d_model} not divisible by {num_heads} heads")
    head_dim = d_model // num_heads
    seq = x.data.shape[-2]
    lead = x.data.shape[:-2]

    def split_heads(t):
        t = reshape(t, (*lead, seq, num_heads, head_dim))
        return swapaxes(t, -3, -2)

    q = split_heads(linear(x, weights["wq"], weights["bq"]))
    k = split_heads(linear(x, weights["wk"], weights["bk"]))
    v = split_heads(linear(x, weights["wv"], weights["bv"]))

    scores = scale(matmul(q, swapaxes(k, -1, -2)), 1.0 / np.sqrt(head_dim))
    attn = softmax(scores, axis=-1)
    attn = dropout(attn, dropout_p, rng, training)
    ctx = swapaxes(matmul(attn, v), -3, -2)
    ctx = reshape(ctx, (*lead, seq, d_model))
    return linear(ctx, weights["wo"], weights["bo"])


def transformer_block(
    x,
    params: dict,
    num_heads: int,
    dropout_p: float = 0.0,
    rng: np.random.Generator = None,
    training: bool = False,
) -> Tensor:
    """Pre-norm residual block: x + MHA(LN(x)), then x + FFN(LN(x)).

    The feed-forward path is linear -> GELU -> (dropout) -> linear.
    """
    attn_in = layer_norm(x, params["ln1_gain"], params["ln1_bias"])
    x = add(x, multi_head_attention(attn_in, params, num_heads, dropout_p, rng, training))
    ffn_in = layer_norm(x, params["ln2_gain"], params["ln2_bias"])
    hidden = gelu(linear(ffn_in, params["ffn_w1"], params["ffn_b1"]))
    hidden = dropout(hidden, dropout_p, rng, training)
    return add(x, linear(hidden, params["ffn_w2"], params["ffn_b2"]))
