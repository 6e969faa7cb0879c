"""Frame encoder: a small fixed conv stack with weights loaded from disk.

The weight file stands in for a real pretrained video encoder: anything
exposing the same ``.npz`` record layout can be dropped in. Inference is
pure numpy, so repeated runs are byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

INPUT_SIZE = 96
WEIGHT_FIELDS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense_w", "dense_b")


class SetupError(Exception):
    pass


def make_weights(path, feature_dim: int = 768, seed: int = 0) -> None:
    """Write a deterministic random-init weight file."""
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)

    conv1_w = he((8, 1, 8, 8), 64)
    conv2_w = he((16, 8, 4, 4), 128)
    dense_in = 16 * 10 * 10
    np.savez(
        path,
        conv1_w=conv1_w,
        conv1_b=np.zeros(8, dtype=np.float32),
        conv2_w=conv2_w,
        conv2_b=np.zeros(16, dtype=np.float32),
        dense_w=he((dense_in, feature_dim), dense_in),
        dense_b=np.zeros(feature_dim, dtype=np.float32),
    )


class FrameEncoder:
    def __init__(self, weights_path):
        weights_path = Path(weights_path)
        if not weights_path.is_file():
            raise SetupError(
                f"encoder weights not found at {weights_path}; "
                "run 'featextract make-weights' or point --weights at a weight file"
            )
        try:
            blob = np.load(weights_path)
            self.weights = {name: blob[name] for name in WEIGHT_FIELDS}
        except (KeyError, ValueError, OSError) as exc:
            raise SetupError(f"invalid weight file {weights_path}: {exc}") from exc

    @property
    def feature_dim(self) -> int:
        return self.weights["dense_w"].shape[1]

    def encode(self, crops) -> np.ndarray:
        """Encode 96x96 uint8 crops into (frames, feature_dim) float32."""
        batch = np.stack(crops).astype(np.float32) / 255.0
        if batch.shape[1:] != (INPUT_SIZE, INPUT_SIZE):
            raise ValueError(f"expected {INPUT_SIZE}x{INPUT_SIZE} crops, got {batch.shape[1:]}")
        x = batch[:, None, :, :]
        x = _relu(_conv(x, self.weights["conv1_w"], self.weights["conv1_b"], stride=4))
        x = _relu(_conv(x, self.weights["conv2_w"], self.weights["conv2_b"], stride=2))
        flat = x.reshape(x.shape[0], -1)
        return np.tanh(flat @ self.weights["dense_w"] + self.weights["dense_b"])


def _relu(x):
    return np.maximum(x, 0.0)


def _conv(x, w, b, stride: int):
    """Valid-mode strided convolution; x (N,C,H,W), w (F,C,kh,kw)."""
    kh, kw = w.shape[2], w.shape[3]
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("nchwij,fcij->nfhw", windows, w, optimize=True)
    return out + b[None, :, None, None]
