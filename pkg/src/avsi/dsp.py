"""STFT analysis/synthesis and magnitude-to-waveform phase reconstruction.

All transforms run in double precision. Frames are centered by default:
the signal is zero-padded by ``fft_size // 2`` on both ends, so a
signal of ``n`` samples yields ``1 + n // hop`` frames and the inverse
transform reproduces every original sample exactly (Hann at 50% overlap
satisfies COLA, and the overlap-add is normalized by the squared-window
sum). The analysis length is recorded on the spectrogram so the inverse
can crop to the exact input length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInput, NumericalDegeneracy


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window, values in [0, 1]."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


@dataclass
class Waveform:
    """Mono audio samples at a fixed rate (16 kHz after ingestion)."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise InvalidInput("waveform must be a nonempty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInput("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise InvalidInput("sample_rate must be positive")

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class StftConfig:
    """Analysis parameters: 512-point FFT, hop 256, periodic Hann."""

    fft_size: int = 512
    hop: int = 256
    centered: bool = True
    window: np.ndarray = None

    def __post_init__(self):
        if self.window is None:
            self.window = hann_window(self.fft_size)
        self.window = np.asarray(self.window, dtype=np.float64)
        if self.hop <= 0 or self.hop > self.fft_size:
            raise InvalidInput("require 0 < hop <= fft_size")
        if self.window.shape != (self.fft_size,):
            raise InvalidInput("window length must equal fft_size")
        if self.window.min() < 0.0 or self.window.max() > 1.0:
            raise InvalidInput("window values must lie in [0, 1]")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        """Frame count produced by :func:`stft` for a given signal length."""
        if self.centered:
            return 1 + num_samples // self.hop
        return 1 + (num_samples - self.fft_size) // self.hop


@dataclass
class Spectrogram:
    """Complex STFT matrix, bins x frames, plus the analysis length."""

    bins: np.ndarray
    length: int

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 2:
            raise InvalidInput("spectrogram bins must be 2-D (bins x frames)")
        if not np.all(np.isfinite(self.bins)):
            raise InvalidInput("spectrogram contains non-finite entries")

    @property
    def num_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def num_frames(self) -> int:
        return self.bins.shape[1]


def _frame(padded: np.ndarray, cfg: StftConfig, num_frames: int) -> np.ndarray:
    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(num_frames)[:, None]
    return padded[idx]


def stft(wave: Waveform, cfg: StftConfig = None) -> Spectrogram:
    """Short-time Fourier transform of a waveform.

    Returns a ``(fft_size // 2 + 1) x L`` complex matrix where column
    ``l`` is the windowed DFT of the frame starting ``l * hop`` samples
    into the (possibly padded) signal.
    """
    cfg = cfg or StftConfig()
    x = wave.samples
    if cfg.centered:
        pad = cfg.fft_size // 2
        padded = np.pad(x, pad, mode="constant")
    else:
        if x.size < cfg.fft_size:
            raise InvalidInput(
                f"waveform of {x.size} samples is shorter than one frame "
                f"({cfg.fft_size} samples, non-centered)"
            )
        padded = x
    num_frames = cfg.num_frames(x.size)
    frames = _frame(padded, cfg, num_frames) * cfg.window[None, :]
    bins = np.fft.rfft(frames, n=cfg.fft_size, axis=1).T
    return Spectrogram(bins=bins, length=x.size)


def istft(spec: Spectrogram, cfg: StftConfig = None) -> Waveform:
    """Inverse STFT by normalized overlap-add.

    Uses the squared-window normalizer, which makes ``istft(stft(x))``
    reproduce ``x`` exactly for COLA-satisfying windows. Raises
    :class:`NumericalDegeneracy` if the normalizer vanishes anywhere in
    the output span.
    """
    cfg = cfg or StftConfig()
    if spec.num_bins != cfg.num_bins:
        raise InvalidInput(
            f"spectrogram has {spec.num_bins} bins, config expects {cfg.num_bins}"
        )
    frames = np.fft.irfft(spec.bins.T, n=cfg.fft_size, axis=1)
    frames *= cfg.window[None, :]

    num_frames = spec.num_frames
    total = cfg.fft_size + cfg.hop * (num_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = cfg.window**2
    for m in range(num_frames):
        lo = m * cfg.hop
        out[lo : lo + cfg.fft_size] += frames[m]
        norm[lo : lo + cfg.fft_size] += wsq

    if cfg.centered:
        start = cfg.fft_size // 2
    else:
        start = 0
    stop = start + spec.length
    if stop > total:
        raise InvalidInput("recorded length exceeds the synthesized span")
    span_norm = norm[start:stop]
    span_out = out[start:stop]
    uncovered = span_norm <= 1e-12
    if uncovered.any():
        # a window that starts/ends at zero leaves 0/0 samples at the span
        # edges; those resolve to 0. Anywhere else (or with signal present)
        # the synthesis is genuinely degenerate.
        edge = np.zeros_like(uncovered)
        edge[: cfg.fft_size] = True
        edge[-cfg.fft_size :] = True
        harmless = edge & (np.abs(span_out) <= 1e-12)
        if np.any(uncovered & ~harmless):
            raise NumericalDegeneracy(
                "window overlap normalizer vanishes inside the output"
            )
        samples = np.where(uncovered, 0.0, span_out / np.where(uncovered, 1.0, span_norm))
    else:
        samples = span_out / span_norm
    return Waveform(samples=samples)


def magnitude(spec: Spectrogram) -> np.ndarray:
    """Entry-wise modulus of a complex spectrogram."""
    return np.abs(spec.bins)


def consistency_residual(bins: np.ndarray, cfg: StftConfig, length: int) -> float:
    """Frobenius norm of ``stft(istft(S)) - S``, the consistency violation."""
    spec = Spectrogram(bins=bins, length=length)
    again = stft(istft(spec, cfg), cfg)
    return float(np.linalg.norm(again.bins - bins))


def _impose_magnitude(bins: np.ndarray, mag: np.ndarray) -> np.ndarray:
    """Replace |bins| with mag, keeping phases. Zero magnitude -> zero entry.

    The re-imposition is iterated so |result| matches mag to within a
    couple of ulps (exact equality for every entry is not representable
    in IEEE complex arithmetic for arbitrary phases).
    """
    absb = np.abs(bins)
    unit = np.where(absb == 0.0, 1.0 + 0.0j, bins / np.where(absb == 0.0, 1.0, absb))
    out = mag * unit
    for _ in range(3):
        a = np.abs(out)
        bad = (a != mag) & (a > 0.0)
        if not bad.any():
            break
        out[bad] = mag[bad] * (out[bad] / a[bad])
    return out


def _consistency_kernels(cfg: StftConfig, radius: int = 3):
    """Numerically measured local kernels of the stft∘istft projection.

    Away from edges the projection acts as a short 2-D stencil over
    (bin, frame) offsets. At 50% overlap a one-frame shift carries a
    sign that alternates with the source bin index, so one stencil per
    source-bin parity is measured from impulse responses.
    """
    probe_cfg = StftConfig(
        fft_size=cfg.fft_size, hop=cfg.hop, centered=True, window=cfg.window.copy()
    )
    num_bins = cfg.num_bins
    frames = 12
    length = cfg.hop * (frames - 1)
    l0 = frames // 2
    base = num_bins // 2 - (num_bins // 2) % 2
    kernels = []
    for parity in (0, 1):
        k0 = base + parity
        probe = np.zeros((num_bins, frames), dtype=np.complex128)
        probe[k0, l0] = 1.0
        resp = stft(istft(Spectrogram(probe, length), probe_cfg), probe_cfg).bins
        kernels.append(resp[k0 - radius : k0 + radius + 1, l0 - 1 : l0 + 2].copy())
    return kernels


def _local_consistency_pass(bins: np.ndarray, kernels, radius: int) -> np.ndarray:
    """Approximate the consistency projection by local weighted sums."""
    num_bins, num_frames = bins.shape
    bin_index = np.arange(num_bins)
    out = np.zeros_like(bins)
    for dl in (-1, 0, 1):
        for dk in range(-radius, radius + 1):
            shifted = np.zeros_like(bins)
            ks_lo, ks_hi = max(0, dk), min(num_bins, num_bins + dk)
            ls_lo, ls_hi = max(0, dl), min(num_frames, num_frames + dl)
            shifted[ks_lo:ks_hi, ls_lo:ls_hi] = bins[
                ks_lo - dk : ks_hi - dk, ls_lo - dl : ls_hi - dl
            ]
            w0 = kernels[0][dk + radius, dl + 1]
            w1 = kernels[1][dk + radius, dl + 1]
            source_parity = (bin_index - dk) % 2
            weights = np.where(source_parity == 0, w0, w1)[:, None]
            out += weights * shifted
    return out


def reconstruct_phase(
    mag: np.ndarray,
    cfg: StftConfig = None,
    iters: int = 50,
    method: str = "griffin-lim",
    length: int = None,
) -> Spectrogram:
    """Estimate phases for a magnitude spectrogram.

    ``griffin-lim`` alternates the consistency projection (stft of the
    istft) with magnitude re-imposition; the consistency residual is
    non-increasing across iterations. ``lws`` replaces the full
    projection with local weighted sums over a small (bin, frame)
    neighborhood, which is cheaper per iteration.

    The output magnitude equals ``mag`` to within a couple of ulps after
    the final projection, and an all-zero input returns an all-zero
    spectrogram immediately.
    """
    cfg = cfg or StftConfig()
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[0] != cfg.num_bins:
        raise InvalidInput(f"magnitude must be {cfg.num_bins} x L")
    if np.any(mag < 0) or not np.all(np.isfinite(mag)):
        raise InvalidInput("magnitude must be nonnegative and finite")
    if iters < 1:
        raise InvalidInput("iters must be >= 1")
    if method not in ("griffin-lim", "lws"):
        raise InvalidInput(f"unknown phase method: {method!r}")
    if length is None:
        length = cfg.hop * (mag.shape[1] - 1) if cfg.centered else (
            cfg.fft_size + cfg.hop * (mag.shape[1] - 1)
        )
        length = max(length, 1)

    if not mag.any():
        return Spectrogram(bins=np.zeros_like(mag, dtype=np.complex128), length=length)

    bins = mag.astype(np.complex128)
    if method == "griffin-lim":
        for _ in range(iters):
            wave = istft(Spectrogram(bins, length), cfg)
            bins = _impose_magnitude(stft(wave, cfg).bins, mag)
    else:
        radius = 4
        kernels = _consistency_kernels(cfg, radius)
        for _ in range(iters):
            bins = _impose_magnitude(_local_consistency_pass(bins, kernels, radius), mag)
        # one exact projection so the result is anchored to a real signal
        wave = istft(Spectrogram(bins, length), cfg)
        bins = _impose_magnitude(stft(wave, cfg).bins, mag)
    return Spectrogram(bins=bins, length=length)
