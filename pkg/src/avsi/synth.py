"""Synthetic audio-visual scenes for desk-scale training and evaluation.

Each scene is a harmonic tone whose fundamental follows a piecewise-
smooth random walk and whose amplitude envelope drifts slowly, tapered
at both ends so edge frames read as inactive. Each item also gets its
own harmonic amplitude profile (its "voice"), so filling a gap well
requires both the trajectory and the timbre read from context. The
visual stream is a deterministic nonlinear embedding of the acoustic
latent (fundamental + envelope) sampled at video rate, optionally
perturbed with noise: by construction the visuals carry the trajectory
information needed to restore a corrupted segment, but not the timbre.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Waveform
from .exceptions import InvalidInput
from .model import VisualFeatures


@dataclass
class SyntheticSceneSpec:
    duration_s: float = 2.0
    f0_range: tuple = (80.0, 250.0)
    f0_step_hz: float = 60.0
    control_interval_s: float = 0.4
    harmonic_count: int = 6
    timbre_spread: float = 0.5
    visual_dim: int = 32
    visual_noise: float = 0.0
    edge_taper_s: float = 0.12
    sample_rate: int = 16000
    video_fps: float = 25.0

    def __post_init__(self):
        if self.duration_s <= 0 or self.visual_dim < 1 or self.harmonic_count < 1:
            raise InvalidInput("scene spec fields must be positive")
        lo, hi = self.f0_range
        if not (0 < lo < hi < self.sample_rate / 2):
            raise InvalidInput("f0 range must be increasing and below Nyquist")


@dataclass
class Scene:
    item_id: str
    waveform: Waveform
    visual: VisualFeatures
    f0_frames: np.ndarray
    env_frames: np.ndarray
    harmonic_weights: np.ndarray = None


def _smooth_walk(rng, n: int, lo: float, hi: float, step: float, start=None) -> np.ndarray:
    """Random walk reflected into [lo, hi]."""
    values = np.empty(n)
    values[0] = rng.uniform(lo, hi) if start is None else start
    for i in range(1, n):
        nxt = values[i - 1] + rng.normal(0.0, step)
        while nxt < lo or nxt > hi:
            if nxt < lo:
                nxt = 2 * lo - nxt
            else:
                nxt = 2 * hi - nxt
        values[i] = nxt
    return values


def _latent_basis(f0_norm: np.ndarray, env: np.ndarray) -> np.ndarray:
    """Fourier-feature lift of the latent so the inverse map stays smooth."""
    cols = [np.ones_like(f0_norm), f0_norm, env, f0_norm * env]
    for j in (1, 2, 3, 4):
        cols.append(np.sin(2.0 * np.pi * j * f0_norm))
        cols.append(np.cos(2.0 * np.pi * j * f0_norm))
    return np.stack(cols, axis=1)


def visual_projection(spec: SyntheticSceneSpec, seed: int) -> np.ndarray:
    """Dataset-level projection from the latent basis to feature space."""
    rng = np.random.default_rng([seed, 0xFEA7])
    basis_dim = _latent_basis(np.zeros(1), np.zeros(1)).shape[1]
    return rng.normal(0.0, 1.0 / np.sqrt(basis_dim), (basis_dim, spec.visual_dim))


def latent_to_features(
    f0: np.ndarray, env: np.ndarray, spec: SyntheticSceneSpec, projection: np.ndarray
) -> np.ndarray:
    """Deterministic embedding of the latent: two plain channels carrying
    the latent directly, the rest a mixed Fourier lift."""
    lo, hi = spec.f0_range
    f0_norm = (np.asarray(f0) - lo) / (hi - lo)
    env = np.asarray(env)
    feats = np.tanh(_latent_basis(f0_norm, env) @ projection)
    if spec.visual_dim >= 3:
        feats = feats.copy()
        feats[:, 0] = f0_norm
        feats[:, 1] = env
    return feats


def make_scene(spec: SyntheticSceneSpec, projection: np.ndarray, item_id: str, rng) -> Scene:
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    n_ctrl = max(int(np.ceil(spec.duration_s / spec.control_interval_s)) + 1, 2)
    ctrl_t = np.linspace(0.0, spec.duration_s, n_ctrl)
    lo, hi = spec.f0_range

    f0_ctrl = _smooth_walk(rng, n_ctrl, lo, hi, spec.f0_step_hz)
    env_ctrl = _smooth_walk(rng, n_ctrl, 0.35, 1.0, 0.12)

    t = np.arange(n) / sr
    f0 = np.interp(t, ctrl_t, f0_ctrl)
    env = np.interp(t, ctrl_t, env_ctrl)

    taper_n = int(spec.edge_taper_s * sr)
    if taper_n > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(taper_n) / taper_n)
        env[:taper_n] *= ramp
        env[-taper_n:] *= ramp[::-1]

    phase = 2.0 * np.pi * np.cumsum(f0) / sr
    weights = 1.0 / np.arange(1, spec.harmonic_count + 1)
    if spec.timbre_spread > 0:
        # per-item timbre: the uncorrupted context is the only place to read it
        jitter = np.exp(rng.normal(0.0, spec.timbre_spread, spec.harmonic_count))
        weights = np.minimum(weights * jitter, 0.9)
        weights[0] = 1.0
    samples = np.zeros(n)
    for h, w in enumerate(weights, start=1):
        keep = h * f0 < sr / 2.0
        samples += np.where(keep, w * np.sin(h * phase), 0.0)
    samples *= env / weights.sum()

    frame_t = (np.arange(int(round(spec.duration_s * spec.video_fps))) + 0.5) / spec.video_fps
    f0_frames = np.interp(frame_t, ctrl_t, f0_ctrl)
    env_frames = np.interp(frame_t, ctrl_t, env_ctrl)
    feats = latent_to_features(f0_frames, env_frames, spec, projection)
    if spec.visual_noise > 0:
        feats = feats + rng.normal(0.0, spec.visual_noise, feats.shape)

    return Scene(
        item_id=item_id,
        waveform=Waveform(samples=samples, sample_rate=sr),
        visual=VisualFeatures(feats=feats, fps=spec.video_fps),
        f0_frames=f0_frames,
        env_frames=env_frames,
        harmonic_weights=weights,
    )


def make_synthetic_dataset(spec: SyntheticSceneSpec, n_items: int, seed: int) -> list:
    """Reproducible scenes: the same seed yields identical samples/features."""
    if n_items < 1:
        raise InvalidInput("n_items must be >= 1")
    projection = visual_projection(spec, seed)
    scenes = []
    for i in range(n_items):
        rng = np.random.default_rng([seed, i])
        scenes.append(make_scene(spec, projection, f"synth{i:04d}", rng))
    return scenes
