"""Bias-corrected ADAM with constant learning rate."""

from __future__ import annotations

import numpy as np

from ..exceptions import StateError
from .tensor import ParamStore


class Adam:
    """Standard ADAM update over a :class:`ParamStore`.

    Moments are kept per parameter in the parameter's dtype; gradients
    are cleared after every step.
    """

    def __init__(
        self,
        params: ParamStore,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        grad_clip: float = None,
        names=None,
    ):
        """``names`` restricts the update to a subset of parameters
        (e.g. the audio-only variant never touches the visual frontend)."""
        self.params = params
        self.names = list(names) if names is not None else params.names()
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.grad_clip = grad_clip
        self.step_count = 0
        self._m = {name: np.zeros_like(params[name].data) for name in self.names}
        self._v = {name: np.zeros_like(params[name].data) for name in self.names}

    def _tracked(self):
        return [(name, self.params[name]) for name in self.names]

    def step(self) -> None:
        for name, t in self._tracked():
            if t.grad is None:
                raise StateError(f"parameter {name!r} has no gradient")
        if self.grad_clip is not None:
            total = np.sqrt(
                sum(float(np.sum(t.grad.astype(np.float64) ** 2)) for _, t in self._tracked())
            )
            if total > self.grad_clip:
                factor = self.grad_clip / total
                for _, t in self._tracked():
                    t.grad *= factor

        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, t in self._tracked():
            g = t.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            t.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            t.grad = None
