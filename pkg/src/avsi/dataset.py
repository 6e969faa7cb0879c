"""In-memory dataset items shared by the trainer and the evaluator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corruption import active_columns
from .dsp import StftConfig, Waveform, magnitude, stft
from .exceptions import InvalidInput
from .model import VisualFeatures


@dataclass
class Item:
    """One utterance: waveform, optional visuals, cached clean magnitude."""

    item_id: str
    waveform: Waveform
    visual: VisualFeatures
    mag: np.ndarray
    activity: np.ndarray
    split: str = "train"

    @property
    def num_frames(self) -> int:
        return self.mag.shape[1]


def prepare_item(
    item_id: str,
    waveform: Waveform,
    visual: VisualFeatures = None,
    cfg: StftConfig = None,
    split: str = "train",
) -> Item:
    cfg = cfg or StftConfig()
    mag = magnitude(stft(waveform, cfg))
    return Item(
        item_id=item_id,
        waveform=waveform,
        visual=visual,
        mag=mag,
        activity=active_columns(mag),
        split=split,
    )


def crop_item(
    item_id: str,
    waveform: Waveform,
    visual: VisualFeatures,
    seconds: float,
    rng: np.random.Generator,
    cfg: StftConfig = None,
    split: str = "train",
) -> Item:
    """Random fixed-length excerpt so batch items share frame counts."""
    target = int(round(seconds * waveform.sample_rate))
    n = len(waveform)
    if n < target:
        raise InvalidInput(f"item {item_id!r} is shorter than {seconds} s")
    offset = int(rng.integers(0, n - target + 1)) if n > target else 0
    cropped_wave = Waveform(waveform.samples[offset : offset + target], waveform.sample_rate)
    cropped_visual = visual
    if visual is not None:
        start_frame = int(round(offset / waveform.sample_rate * visual.fps))
        want = int(round(seconds * visual.fps))
        stop = min(start_frame + want, visual.num_frames)
        start_frame = max(0, stop - want)
        if stop - start_frame < 1:
            raise InvalidInput(f"item {item_id!r} has no visual frames in the crop")
        cropped_visual = VisualFeatures(visual.feats[start_frame:stop], visual.fps)
    return prepare_item(item_id, cropped_wave, cropped_visual, cfg, split)


def scenes_to_items(scenes, cfg: StftConfig = None, split: str = "train") -> list:
    return [prepare_item(s.item_id, s.waveform, s.visual, cfg, split) for s in scenes]
