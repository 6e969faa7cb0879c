"""Face localization and mouth-region cropping.

Two detectors: an optional OpenCV Haar cascade (pass the XML path) and a
dependency-free brightness-blob heuristic good enough for frontal,
evenly lit faces and for synthetic fixtures. When neither finds a face
in a frame, the previous crop window is reused (initially a centered
square) and a warning is counted.
"""

from __future__ import annotations

import numpy as np

import cv2

MOUTH_SIZE = 96


class CascadeDetector:
    def __init__(self, xml_path):
        self.cascade = cv2.CascadeClassifier(str(xml_path))
        if self.cascade.empty():
            raise ValueError(f"could not load cascade from {xml_path}")

    def detect(self, gray):
        faces = self.cascade.detectMultiScale(gray, 1.1, 4, minSize=(24, 24))
        if len(faces) == 0:
            return None
        return max((tuple(f) for f in faces), key=lambda f: f[2] * f[3])


class BrightnessBlobDetector:
    """Largest compact bright region, Otsu-thresholded."""

    def __init__(self, min_area_frac: float = 0.02, max_area_frac: float = 0.85):
        self.min_area_frac = min_area_frac
        self.max_area_frac = max_area_frac

    def detect(self, gray):
        blurred = cv2.GaussianBlur(gray, (9, 9), 0)
        _, binary = cv2.threshold(blurred, 0, 255, cv2.THRESH_BINARY + cv2.THRESH_OTSU)
        count, _, stats, _ = cv2.connectedComponentsWithStats(binary)
        if count < 2:
            return None
        areas = stats[1:, cv2.CC_STAT_AREA]
        best = int(np.argmax(areas)) + 1
        x, y, w, h, area = stats[best]
        frac = area / gray.size
        if frac < self.min_area_frac or frac > self.max_area_frac:
            return None
        return (int(x), int(y), int(w), int(h))


def mouth_window(face, frame_shape):
    """Square window over the lower-middle part of a face box."""
    x, y, w, h = face
    cx = x + w // 2
    mouth_cy = y + int(0.78 * h)
    side = max(8, int(0.55 * w))
    half = side // 2
    rows, cols = frame_shape
    left = np.clip(cx - half, 0, max(cols - side, 0))
    top = np.clip(mouth_cy - half, 0, max(rows - side, 0))
    side_c = min(side, cols - left, rows - top)
    return (int(left), int(top), int(side_c), int(side_c))


def centered_window(frame_shape):
    rows, cols = frame_shape
    side = min(rows, cols) // 2
    return ((cols - side) // 2, (rows - side) // 2, side, side)


def crop_mouth_frames(frames, detector):
    """96x96 mouth crops for every frame; returns (crops, fallback_count)."""
    crops = []
    fallbacks = 0
    window = None
    for gray in frames:
        face = detector.detect(gray)
        if face is not None:
            window = mouth_window(face, gray.shape)
        else:
            fallbacks += 1
            if window is None:
                window = centered_window(gray.shape)
        x, y, w, h = window
        patch = gray[y : y + h, x : x + w]
        crops.append(cv2.resize(patch, (MOUTH_SIZE, MOUTH_SIZE), interpolation=cv2.INTER_AREA))
    return crops, fallbacks
