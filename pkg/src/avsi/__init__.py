"""Audio-visual speech inpainting at desk scale.

Corrupt speech spectrograms with fullband temporal gaps, restore them
with a two-stage audio-visual transformer trained under a region-
weighted magnitude loss, reconstruct waveforms by consistency-based
phase estimation, and score the results with region-restricted MAE and
an intelligibility metric.
"""

from . import corruption, data_io, dataset, dsp, metrics, nn, synth, train
from .model import InpaintingModel, ModelConfig, VisualFeatures

__all__ = [
    "InpaintingModel",
    "ModelConfig",
    "VisualFeatures",
    "corruption",
    "data_io",
    "dataset",
    "dsp",
    "metrics",
    "nn",
    "synth",
    "train",
]

__version__ = "0.1.0"
