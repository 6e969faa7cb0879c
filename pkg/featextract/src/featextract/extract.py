"""The extraction pipeline and the AVF1 feature-file writer.

Feature files match the consumer's contract exactly:

    magic "AVF1" | version u32 | D_v u32 | T u32 | fps f32 |
    payload: T x D_v little-endian float32, frame-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .crop import BrightnessBlobDetector, CascadeDetector, crop_mouth_frames
from .encoder import FrameEncoder
from .video import TARGET_FPS, read_gray_frames, resample_to_target_fps

FEATURE_MAGIC = b"AVF1"
FEATURE_VERSION = 1


@dataclass
class ExtractionReport:
    frames: int
    feature_dim: int
    fallback_frames: int


def write_feature_file(feats: np.ndarray, path, fps: float = TARGET_FPS) -> None:
    feats = np.ascontiguousarray(feats, dtype="<f4")
    frames, width = feats.shape
    header = FEATURE_MAGIC + struct.pack("<IIIf", FEATURE_VERSION, width, frames, fps)
    with open(path, "wb") as fh:
        fh.write(header + feats.tobytes())


def extract(video_path, out_path, weights_path, cascade_path=None) -> ExtractionReport:
    """Mouth-crop a video, encode each 25 fps frame, write a feature file."""
    detector = CascadeDetector(cascade_path) if cascade_path else BrightnessBlobDetector()
    encoder = FrameEncoder(weights_path)

    frames, source_fps = read_gray_frames(video_path)
    timeline = resample_to_target_fps(frames, source_fps)
    crops, fallbacks = crop_mouth_frames(timeline, detector)
    feats = encoder.encode(crops)
    write_feature_file(feats, out_path)
    return ExtractionReport(
        frames=len(timeline), feature_dim=encoder.feature_dim, fallback_frames=fallbacks
    )
