"""Dense-tensor reverse-mode autodiff substrate.

A :class:`Tensor` wraps a numpy array plus an optional gradient slot.
Operations (see :mod:`avsi.nn.functional`) record parent links and a
backward closure on their outputs; :meth:`Tensor.backward` walks the
recorded graph in reverse topological order and accumulates gradients.

Compute runs in single precision by default; switch the default (or
build individual models) with float64 for gradient certification.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..exceptions import InvalidInput, NumericalDegeneracy

_default_dtype = np.dtype(np.float32)
_grad_enabled = True
_finite_checks = False


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise InvalidInput("default dtype must be float32 or float64")
    _default_dtype = dtype


def default_dtype() -> np.dtype:
    return _default_dtype


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def finite_checks():
    """Raise on any op producing NaN/Inf (debug sweep; off by default)."""
    global _finite_checks
    prev = _finite_checks
    _finite_checks = True
    try:
        yield
    finally:
        _finite_checks = prev


def finite_checks_enabled() -> bool:
    return _finite_checks


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, (np.ndarray, np.floating)):
            data = np.asarray(data)
            if data.dtype not in (np.float32, np.float64):
                data = data.astype(_default_dtype)
        else:
            data = np.asarray(data, dtype=_default_dtype)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray, fresh: bool = False) -> None:
        """Add into the gradient slot.

        ``fresh=True`` promises the caller is donating a newly allocated,
        writable array that no other node will receive, letting us skip
        the defensive copy.
        """
        if self.grad is None:
            if fresh and grad.dtype == self.data.dtype and grad.flags.writeable:
                self.grad = grad
            else:
                self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self, grad: np.ndarray = None) -> None:
        """Reverse-mode gradient accumulation from this node."""
        if not self.requires_grad:
            raise InvalidInput("backward() on a tensor that does not require grad")
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise InvalidInput("seed gradient shape must match tensor shape")

        order = _toposort(self)
        self.accumulate_grad(grad)
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior activations are single-use; free them eagerly
                if node is not self:
                    node.grad = None
                node._backward = None
                node._parents = ()

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor):
    """Iterative post-order over the recorded graph, returned in reverse."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def make_result(data: np.ndarray, parents, backward) -> Tensor:
    """Wrap an op result, recording the graph when grads are live."""
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NumericalDegeneracy("op produced non-finite values")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(value) -> Tensor:
    """Pass tensors through; wrap arrays/scalars as constants."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class ParamStore:
    """Named parameter tensors with deterministic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise InvalidInput(f"duplicate parameter name: {name!r}")
        t = Tensor(np.asarray(array), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: dict) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise InvalidInput(
                f"parameter names do not match (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        for name, t in self._params.items():
            arr = np.asarray(state[name])
            if arr.shape != t.data.shape:
                raise InvalidInput(f"shape mismatch for {name!r}")
            t.data = arr.astype(t.data.dtype, copy=True)
            t.grad = None
