"""Video frame ingestion with resampling to the 25 fps feature timeline."""

from __future__ import annotations

import numpy as np

import cv2

TARGET_FPS = 25.0


class VideoError(Exception):
    pass


def read_gray_frames(path):
    """All frames as grayscale uint8 arrays plus the source frame rate."""
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise VideoError(f"cannot open video: {path}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    if not fps or fps <= 0:
        fps = TARGET_FPS
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY))
    cap.release()
    if not frames:
        raise VideoError(f"video has no decodable frames: {path}")
    return frames, float(fps)


def resample_to_target_fps(frames, source_fps: float):
    """Pick the nearest source frame for each 25 fps output slot."""
    duration = len(frames) / source_fps
    count = max(1, int(round(duration * TARGET_FPS)))
    out = []
    for k in range(count):
        t = (k + 0.5) / TARGET_FPS
        index = min(int(t * source_fps), len(frames) - 1)
        out.append(frames[index])
    return out
