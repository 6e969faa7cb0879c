"""Gap sampling, column masks, corruption, and compositing.

Gaps are fullband and defined directly in STFT columns: a gap of ``g``
frames zeroes ``g`` consecutive spectrogram columns. The binary mask is
column-constant (1 = uncorrupted), stored as a length-L vector and
broadcast over bins where needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import StftConfig
from .exceptions import InfeasiblePlacement, InvalidInput

DURATION_MS_MIN = 160.0
DURATION_MS_MAX = 1600.0
FIXED_SETUPS_MS = (160.0, 400.0, 800.0, 1600.0)


@dataclass(frozen=True)
class GapSpec:
    """A contiguous run of corrupted spectrogram columns."""

    start_frame: int
    num_frames: int

    def __post_init__(self):
        if self.start_frame < 0 or self.num_frames < 1:
            raise InvalidInput("gap needs start_frame >= 0 and num_frames >= 1")

    @property
    def stop_frame(self) -> int:
        return self.start_frame + self.num_frames


@dataclass
class GapPolicy:
    """How gap durations and positions are drawn.

    ``mode`` is ``"random-duration"`` (uniform in milliseconds over
    ``duration_ms_range``) or ``"fixed-duration"`` (always
    ``fixed_duration_ms``). ``placement`` is ``"uniform"`` over all
    feasible starts or ``"active-speech-only"``, which restricts the gap
    to columns flagged active.
    """

    mode: str = "random-duration"
    duration_ms_range: tuple = (DURATION_MS_MIN, DURATION_MS_MAX)
    fixed_duration_ms: float = 400.0
    placement: str = "uniform"
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("random-duration", "fixed-duration"):
            raise InvalidInput(f"unknown gap mode: {self.mode!r}")
        if self.placement not in ("uniform", "active-speech-only"):
            raise InvalidInput(f"unknown placement: {self.placement!r}")
        lo, hi = self.duration_ms_range
        if not (DURATION_MS_MIN <= lo <= hi <= DURATION_MS_MAX):
            raise InvalidInput(
                f"duration range must lie within [{DURATION_MS_MIN}, {DURATION_MS_MAX}] ms"
            )
        if not (DURATION_MS_MIN <= self.fixed_duration_ms <= DURATION_MS_MAX):
            raise InvalidInput("fixed duration outside the allowed range")

    def sample_duration_ms(self, rng: np.random.Generator) -> float:
        if self.mode == "fixed-duration":
            return float(self.fixed_duration_ms)
        lo, hi = self.duration_ms_range
        return float(rng.uniform(lo, hi))


def ms_to_frames(duration_ms: float, cfg: StftConfig = None) -> int:
    """Convert a duration to STFT frames: round(ms * 16000 / (1000 * hop))."""
    cfg = cfg or StftConfig()
    if duration_ms <= 0:
        raise InvalidInput("duration must be positive")
    frames = round(duration_ms * 16000.0 / (1000.0 * cfg.hop))
    if frames == 0:
        raise InvalidInput(f"{duration_ms} ms is shorter than one frame")
    return frames


def sample_gap(
    policy: GapPolicy,
    num_columns: int,
    activity: np.ndarray = None,
    rng: np.random.Generator = None,
    cfg: StftConfig = None,
) -> GapSpec:
    """Draw a gap under the policy, fully inside ``[0, num_columns)``.

    Omitting ``rng`` seeds a fresh generator from ``policy.rng_seed``, so
    repeated calls with identical inputs return identical gaps.
    """
    if rng is None:
        rng = np.random.default_rng(policy.rng_seed)
    gap_frames = ms_to_frames(policy.sample_duration_ms(rng), cfg)
    if gap_frames > num_columns:
        raise InfeasiblePlacement(
            f"gap of {gap_frames} frames does not fit in {num_columns} columns"
        )
    if policy.placement == "uniform":
        start = int(rng.integers(0, num_columns - gap_frames + 1))
        return GapSpec(start_frame=start, num_frames=gap_frames)

    if activity is None:
        raise InvalidInput("active-speech-only placement requires an activity vector")
    activity = np.asarray(activity, dtype=bool)
    if activity.shape != (num_columns,):
        raise InvalidInput("activity vector length must equal the column count")
    run = np.cumsum(np.concatenate(([0], activity.astype(np.int64))))
    starts = np.flatnonzero(run[gap_frames:] - run[:-gap_frames] == gap_frames)
    if starts.size == 0:
        raise InfeasiblePlacement(
            f"no active run of {gap_frames} columns accommodates the gap"
        )
    start = int(rng.choice(starts))
    return GapSpec(start_frame=start, num_frames=gap_frames)


def active_columns(mag: np.ndarray, threshold_db: float = 40.0) -> np.ndarray:
    """Columns whose energy is within ``threshold_db`` of the loudest column."""
    mag = np.asarray(mag, dtype=np.float64)
    energy = np.sum(mag**2, axis=0)
    peak = energy.max()
    if peak <= 0.0:
        return np.zeros(mag.shape[1], dtype=bool)
    return energy > peak * 10.0 ** (-threshold_db / 10.0)


def build_mask(gap: GapSpec, num_columns: int) -> np.ndarray:
    """Length-L binary column mask; 0 inside the gap, 1 elsewhere."""
    if gap.stop_frame > num_columns:
        raise InvalidInput("gap extends past the last column")
    mask = np.ones(num_columns, dtype=np.float64)
    mask[gap.start_frame : gap.stop_frame] = 0.0
    return mask


def _check_mask(mag: np.ndarray, mask: np.ndarray):
    if mask.ndim != 1 or mag.ndim != 2 or mag.shape[1] != mask.shape[0]:
        raise InvalidInput(
            f"mask of length {mask.shape} does not match spectrogram {mag.shape}"
        )
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise InvalidInput("mask entries must be exactly 0 or 1")


def apply_mask(mag: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the corrupted columns of a magnitude spectrogram."""
    mag = np.asarray(mag, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    _check_mask(mag, mask)
    return mag * mask[None, :]


def composite(known: np.ndarray, predicted: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Take uncorrupted columns bit-exactly from ``known``, the rest from ``predicted``."""
    known = np.asarray(known, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if known.shape != predicted.shape:
        raise InvalidInput(f"shape mismatch: {known.shape} vs {predicted.shape}")
    _check_mask(known, mask)
    return np.where(mask[None, :] == 1.0, known, predicted)


def gap_sample_span(gap: GapSpec, cfg: StftConfig = None) -> tuple:
    """Sample interval covered by the gap's frames, including window support.

    Approximate by construction: frames partially overlapping the gap are
    included in full. Useful only for audible demos of corrupted input.
    """
    cfg = cfg or StftConfig()
    offset = cfg.fft_size // 2 if cfg.centered else 0
    lo = gap.start_frame * cfg.hop - offset
    hi = (gap.stop_frame - 1) * cfg.hop - offset + cfg.fft_size
    return max(lo, 0), hi


def zero_gap_samples(samples: np.ndarray, gap: GapSpec, cfg: StftConfig = None) -> np.ndarray:
    """Waveform with the gap's (approximate) sample span zeroed, for demos."""
    lo, hi = gap_sample_span(gap, cfg)
    out = np.array(samples, dtype=np.float64, copy=True)
    out[lo : min(hi, out.size)] = 0.0
    return out
