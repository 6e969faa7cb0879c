"""WAV ingestion/emission, the visual-feature binary format, and manifests.

WAV reading accepts PCM 16-bit and 32-bit-float files, mono or stereo,
averages channels, and resamples to 16 kHz with a windowed-sinc
polyphase filter. Parse errors always name the byte offset. Writing
quantizes to 16-bit PCM with round-half-even and no dithering, so round
trips are deterministic.

Feature files carry ``T x D_v`` little-endian float32 payloads,
frame-major (so appending frames is a file append):

    magic "AVF1" | version u32 | D_v u32 | T u32 | fps f32 | payload

Manifests are line-oriented UTF-8 with tab separators:

    id <TAB> wav_path <TAB> feature_path <TAB> split <TAB> gap_start <TAB> gap_frames

with ``-`` for an absent feature path or gap. Paths are resolved
relative to the manifest's directory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .corruption import GapSpec
from .dsp import Waveform
from .exceptions import FormatError, InvalidInput
from .model import VisualFeatures

TARGET_RATE = 16000

FEATURE_MAGIC = b"AVF1"
FEATURE_VERSION = 1


# -- WAV -------------------------------------------------------------------------


def _require(blob: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(blob):
        raise FormatError(f"truncated {what} at byte {offset}")
    return blob[offset : offset + count]


def read_wav(path) -> Waveform:
    """Read a WAV file as mono 16 kHz samples in [-1, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()

    if _require(blob, 0, 4, "RIFF header") != b"RIFF":
        raise FormatError("missing RIFF magic at byte 0")
    if _require(blob, 8, 4, "WAVE tag") != b"WAVE":
        raise FormatError("missing WAVE tag at byte 8")

    fmt = None
    data = None
    offset = 12
    while offset + 8 <= len(blob):
        chunk_id = blob[offset : offset + 4]
        (chunk_size,) = struct.unpack("<I", blob[offset + 4 : offset + 8])
        body_off = offset + 8
        if chunk_id == b"fmt ":
            body = _require(blob, body_off, chunk_size, "fmt chunk")
            if chunk_size < 16:
                raise FormatError(f"fmt chunk too short at byte {offset}")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            data = _require(blob, body_off, chunk_size, "data chunk")
        offset = body_off + chunk_size + (chunk_size & 1)
    if fmt is None:
        raise FormatError(f"no fmt chunk before byte {offset}")
    if data is None:
        raise FormatError(f"no data chunk before byte {offset}")

    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise FormatError(f"unsupported channel count {channels}")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(data[: len(data) - len(data) % (2 * channels)], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(data[: len(data) - len(data) % (4 * channels)], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise FormatError(f"unsupported codec (format={audio_format}, bits={bits})")
    if samples.size == 0:
        raise FormatError("empty data chunk")
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)

    peak = np.abs(samples).max()
    if peak > 1.0:
        samples = samples / peak
    if sample_rate != TARGET_RATE:
        if sample_rate <= 0:
            raise FormatError(f"invalid sample rate {sample_rate}")
        ratio = Fraction(TARGET_RATE, int(sample_rate))
        samples = resample_poly(samples, ratio.numerator, ratio.denominator)
        samples = np.clip(samples, -1.0, 1.0)
    return Waveform(samples=samples, sample_rate=TARGET_RATE)


def write_wav(wave: Waveform, path) -> None:
    """Write mono 16-bit PCM; quantization rounds half to even."""
    quantized = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = quantized.tobytes()
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, 1, 1, wave.sample_rate,
                        wave.sample_rate * 2, 2, 16),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    with open(path, "wb") as fh:
        fh.write(header + payload)


# -- feature files -----------------------------------------------------------------


def write_features(visual: VisualFeatures, path) -> None:
    feats = np.ascontiguousarray(visual.feats, dtype="<f4")
    frames, width = feats.shape
    header = FEATURE_MAGIC + struct.pack(
        "<IIIf", FEATURE_VERSION, width, frames, float(visual.fps)
    )
    with open(path, "wb") as fh:
        fh.write(header + feats.tobytes())


def read_features(path) -> VisualFeatures:
    with open(path, "rb") as fh:
        blob = fh.read()
    if _require(blob, 0, 4, "feature magic") != FEATURE_MAGIC:
        raise FormatError("bad feature magic at byte 0")
    version, width, frames, fps = struct.unpack("<IIIf", _require(blob, 4, 16, "feature header"))
    if version != FEATURE_VERSION:
        raise FormatError(f"unsupported feature version {version} at byte 4")
    expected = 4 * frames * width
    payload = _require(blob, 20, expected, "feature payload")
    if len(blob) != 20 + expected:
        raise FormatError(f"trailing bytes after byte {20 + expected}")
    if frames < 1 or width < 1:
        raise FormatError("feature file must hold at least one frame and one channel")
    feats = np.frombuffer(payload, dtype="<f4").reshape(frames, width).astype(np.float64)
    if not np.all(np.isfinite(feats)):
        raise FormatError("feature payload contains non-finite values")
    if not np.isfinite(fps) or fps <= 0:
        raise FormatError("feature fps must be positive")
    return VisualFeatures(feats=feats, fps=float(fps))


# -- manifests -----------------------------------------------------------------------


@dataclass
class ManifestEntry:
    item_id: str
    wav_path: Path
    feature_path: Path = None
    split: str = "train"
    gap: GapSpec = None


def write_manifest(entries, path) -> None:
    path = Path(path)
    lines = []
    for e in entries:
        gap_start = str(e.gap.start_frame) if e.gap else "-"
        gap_frames = str(e.gap.num_frames) if e.gap else "-"
        feature = str(e.feature_path) if e.feature_path else "-"
        lines.append(
            "\t".join([e.item_id, str(e.wav_path), feature, e.split, gap_start, gap_frames])
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> list:
    """Load manifest entries, validating ids and referenced files."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 tab-separated fields")
        item_id, wav_rel, feat_rel, split, gap_start, gap_frames = fields
        if item_id in seen:
            raise FormatError(f"{path}:{lineno}: duplicate id {item_id!r}")
        seen.add(item_id)
        wav_path = base / wav_rel
        if not wav_path.is_file():
            raise InvalidInput(f"{path}:{lineno}: missing wav file {wav_path}")
        feature_path = None
        if feat_rel != "-":
            feature_path = base / feat_rel
            if not feature_path.is_file():
                raise InvalidInput(f"{path}:{lineno}: missing feature file {feature_path}")
        gap = None
        if (gap_start, gap_frames) != ("-", "-"):
            try:
                gap = GapSpec(start_frame=int(gap_start), num_frames=int(gap_frames))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad gap fields") from exc
        entries.append(ManifestEntry(item_id, wav_path, feature_path, split, gap))
    return entries
