"""Region-weighted MAE loss, the training loop, and desk-scale checks.

Training predicts the whole spectrogram and weights the corrupted region
more heavily (alpha) than the uncorrupted one (beta), each region's MAE
averaged over its own entry count. A fresh gap is sampled per item per
step. The loss is evaluated in the standardized log1p domain; reported
evaluation numbers are always magnitude-domain (see :mod:`avsi.metrics`).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .corruption import GapPolicy, GapSpec, apply_mask, build_mask, sample_gap
from .dsp import StftConfig
from .exceptions import ConfigError, InvalidInput
from .model import InpaintingModel, ModelConfig
from .nn.tensor import Tensor


@dataclass
class TrainConfig:
    alpha: float = 10.0
    beta: float = 1.0
    lr: float = 1e-4
    batch: int = 10
    max_steps: int = 1000
    seed: int = 0
    eval_every: int = 100
    gap_policy: GapPolicy = field(default_factory=GapPolicy)
    grad_clip: float = None
    val_stoi_items: int = 2
    phase_iters: int = 30
    crop_frames: int = None  # per-step random excerpt length, in frames

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInput("loss weights must be nonnegative")
        if self.batch < 1 or self.max_steps < 0 or self.eval_every < 1:
            raise InvalidInput("batch, max_steps, eval_every must be positive")
        if self.crop_frames is not None and self.crop_frames < 1:
            raise InvalidInput("crop_frames must be positive")


def loss(predicted: np.ndarray, target: np.ndarray, mask: np.ndarray,
         alpha: float = 10.0, beta: float = 1.0) -> float:
    """Weighted MAE: alpha over corrupted entries + beta over uncorrupted.

    Each region's MAE is averaged over its own entry count; an empty
    region contributes zero.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if predicted.shape != target.shape or predicted.ndim != 2:
        raise InvalidInput(f"shape mismatch: {predicted.shape} vs {target.shape}")
    if mask.shape != (predicted.shape[1],):
        raise InvalidInput("mask length must equal the column count")
    if predicted.shape[1] == 0:
        raise InvalidInput("loss undefined for zero columns")
    diff = np.abs(predicted - target)
    corrupted = mask == 0.0
    total = 0.0
    if corrupted.any():
        total += alpha * diff[:, corrupted].mean()
    if (~corrupted).any():
        total += beta * diff[:, ~corrupted].mean()
    return float(total)


def region_weights(masks: np.ndarray, num_bins: int, alpha: float, beta: float) -> np.ndarray:
    """Per-entry weights realizing the region-weighted MAE, (batch, L, num_bins)."""
    masks = np.asarray(masks, dtype=np.float64)
    batch, num_cols = masks.shape
    weights = np.zeros((batch, num_cols, num_bins))
    for i in range(batch):
        corrupted = masks[i] == 0.0
        n_c = int(corrupted.sum()) * num_bins
        n_u = int((~corrupted).sum()) * num_bins
        if n_c:
            weights[i, corrupted, :] = alpha / n_c
        if n_u:
            weights[i, ~corrupted, :] = beta / n_u
    return weights


def batch_loss(pred: Tensor, target: np.ndarray, weights: np.ndarray,
               scale_: float = 1.0) -> Tensor:
    """Mean over the batch of the per-item weighted MAE, as a graph node."""
    diff = nn.absolute(nn.sub(pred, target.astype(pred.dtype)))
    weighted = nn.mul(diff, (weights * scale_ / weights.shape[0]).astype(pred.dtype))
    return nn.tensor_sum(weighted)


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(list(key))


def trainable_names(model: InpaintingModel, use_visual: bool) -> list:
    """All parameters, minus the visual pathway when it never runs."""
    if use_visual:
        return model.params.names()
    return [
        name for name in model.params.names()
        if not name.startswith("visual_in/") and name != "modality/visual"
    ]


class Trainer:
    """Owns a model and a prepared item list; one gap per item per step."""

    def __init__(self, model: InpaintingModel, items, cfg: TrainConfig,
                 val_items=(), use_visual: bool = True, stft_cfg: StftConfig = None):
        if not items:
            raise InvalidInput("no training items")
        self.model = model
        self.items = list(items)
        self.val_items = list(val_items)
        self.cfg = cfg
        self.stft_cfg = stft_cfg or StftConfig()
        self.use_visual = use_visual and all(it.visual is not None for it in self.items)

        if cfg.crop_frames is not None:
            short = [it.item_id for it in self.items if it.num_frames < cfg.crop_frames]
            if short:
                raise InvalidInput(f"items shorter than the crop window: {short}")
            self._visual_crop = None
            if self.use_visual:
                stft_hop_s = self.stft_cfg.hop / 16000.0
                fps = self.items[0].visual.fps
                self._visual_crop = int(cfg.crop_frames * stft_hop_s * fps)
        else:
            frames = {it.num_frames for it in self.items}
            if len(frames) != 1:
                raise InvalidInput(
                    f"batch items must share a frame count, got {sorted(frames)}"
                )
            if self.use_visual:
                vframes = {it.visual.num_frames for it in self.items}
                if len(vframes) != 1:
                    raise InvalidInput("batch items must share a visual frame count")

        logs = np.concatenate([np.log1p(it.mag).ravel() for it in self.items])
        std = float(logs.std())
        model.set_normalization(float(logs.mean()), std if std > 0 else 1.0)
        self._targets = {
            it.item_id: np.log1p(it.mag).T.copy() for it in self.items + self.val_items
        }
        self.optimizer = nn.Adam(
            model.params, lr=cfg.lr, grad_clip=cfg.grad_clip,
            names=trainable_names(model, self.use_visual),
        )
        self.history = []

    def _gap_for(self, item, step: int, slot: int, tag: int) -> GapSpec:
        rng = _rng(self.cfg.seed, tag, step, slot)
        return sample_gap(
            self.cfg.gap_policy, item.num_frames, activity=item.activity, rng=rng,
            cfg=self.stft_cfg,
        )

    def _batch_indices(self, step: int) -> np.ndarray:
        n = len(self.items)
        rng = _rng(self.cfg.seed, 0, step)
        if n >= self.cfg.batch:
            return rng.choice(n, size=self.cfg.batch, replace=False)
        return rng.integers(0, n, size=self.cfg.batch)

    def _crop_views(self, item, step: int, slot: int):
        """Magnitude/target/visual/activity views for one excerpt."""
        target = self._targets[item.item_id]
        if self.cfg.crop_frames is None:
            feats = item.visual.feats if self.use_visual else None
            return item.mag, target, feats, item.activity
        frames = self.cfg.crop_frames
        rng = _rng(self.cfg.seed, 5, step, slot)
        offset = int(rng.integers(0, item.num_frames - frames + 1))
        mag = item.mag[:, offset : offset + frames]
        target = target[offset : offset + frames]
        activity = item.activity[offset : offset + frames]
        feats = None
        if self.use_visual:
            fps = item.visual.fps
            v0 = int(round(offset * self.stft_cfg.hop / 16000.0 * fps))
            v0 = min(v0, item.visual.num_frames - self._visual_crop)
            feats = item.visual.feats[v0 : v0 + self._visual_crop]
        return mag, target, feats, activity

    def train_step(self, step: int) -> float:
        """Sample gaps (and excerpts), run forward/backward, one ADAM update."""
        idx = self._batch_indices(step)
        masked, targets, masks, visuals = [], [], [], []
        for slot, i in enumerate(idx):
            item = self.items[int(i)]
            mag, target, feats, activity = self._crop_views(item, step, slot)
            gap_rng = _rng(self.cfg.seed, 1, step, slot)
            gap = sample_gap(self.cfg.gap_policy, mag.shape[1],
                             activity=activity, rng=gap_rng, cfg=self.stft_cfg)
            mask = build_mask(gap, mag.shape[1])
            masked.append(apply_mask(mag, mask))
            targets.append(target)
            masks.append(mask)
            if self.use_visual:
                visuals.append(feats)
        masked = np.stack(masked)
        targets = np.stack(targets)
        masks = np.stack(masks)
        visual_batch = np.stack(visuals).astype(self.model.dtype) if self.use_visual else None

        drop_rng = _rng(self.cfg.seed, 2, step)
        pred = self.model.predict_log_batch(masked, visual_batch, training=True, rng=drop_rng)
        weights = region_weights(masks, self.model.config.num_bins, self.cfg.alpha, self.cfg.beta)
        loss_node = batch_loss(pred, targets, weights, scale_=1.0 / self.model.norm_std)
        value = loss_node.item()
        loss_node.backward()
        self.optimizer.step()
        return value

    def validate(self, step: int):
        """Magnitude-domain corrupted MAE (and STOI on a few items)."""
        from .metrics import evaluate_set

        if not self.val_items:
            return float("nan"), float("nan")
        report = evaluate_set(
            self.model,
            self.val_items,
            setup="random",
            seed=self.cfg.seed + step,
            use_visual=self.use_visual,
            phase_iters=self.cfg.phase_iters,
            stoi_limit=self.cfg.val_stoi_items,
            stft_cfg=self.stft_cfg,
            placement=self.cfg.gap_policy.placement,
        )
        return report.mean_mae_corrupted, report.mean_stoi

    def run(self, csv_path=None, ckpt_path=None) -> list:
        """Train for cfg.max_steps; returns (step, loss, val_mae, val_stoi) rows."""
        rows = []
        for step in range(1, self.cfg.max_steps + 1):
            value = self.train_step(step)
            if step % self.cfg.eval_every == 0 or step == self.cfg.max_steps:
                val_mae, val_stoi = self.validate(step)
                rows.append((step, value, val_mae, val_stoi))
        self.history.extend(rows)
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["step", "loss", "val_mae_corrupted", "val_stoi"])
                writer.writerows(rows)
        if ckpt_path is not None:
            self.model.save(ckpt_path)
        return rows


def corrupted_region_normlog_mae(model: InpaintingModel, item, gap: GapSpec) -> float:
    """Corrupted-region MAE of the model estimate in the normalized-log domain."""
    mask = build_mask(gap, item.num_frames)
    masked = apply_mask(item.mag, mask)
    visual = item.visual.feats[None].astype(model.dtype) if item.visual is not None else None
    with nn.no_grad():
        pred = model.predict_log_batch(masked[None], visual, training=False)
    target = np.log1p(item.mag).T
    diff = np.abs(pred.data[0].astype(np.float64) - target)
    corrupted = mask == 0.0
    return float(diff[corrupted, :].mean() / model.norm_std)


def overfit_one(model: InpaintingModel, item, steps: int, gap: GapSpec = None,
                lr: float = 1e-4, alpha: float = 10.0, beta: float = 1.0) -> float:
    """Capacity probe: fit one fixed sample and gap, return final corrupted MAE.

    Runs without dropout so the trajectory is deterministic; with
    ``steps=0`` this just scores the untrained model.
    """
    if gap is None:
        frames = min(25, max(1, item.num_frames // 2))
        gap = GapSpec(start_frame=(item.num_frames - frames) // 2, num_frames=frames)
    if model.norm_mean == 0.0 and model.norm_std == 1.0:
        logs = np.log1p(item.mag)
        std = float(logs.std())
        model.set_normalization(float(logs.mean()), std if std > 0 else 1.0)

    mask = build_mask(gap, item.num_frames)
    masked = apply_mask(item.mag, mask)[None]
    target = np.log1p(item.mag).T[None]
    weights = region_weights(mask[None], model.config.num_bins, alpha, beta)
    visual = item.visual.feats[None].astype(model.dtype) if item.visual is not None else None

    optimizer = nn.Adam(model.params, lr=lr,
                        names=trainable_names(model, visual is not None))
    for _ in range(steps):
        pred = model.predict_log_batch(masked, visual, training=False)
        node = batch_loss(pred, target, weights, scale_=1.0 / model.norm_std)
        node.backward()
        optimizer.step()
    return corrupted_region_normlog_mae(model, item, gap)


# -- flat key=value config files ----------------------------------------------

_TRAIN_KEYS = {
    "alpha": float,
    "beta": float,
    "lr": float,
    "batch": int,
    "max_steps": int,
    "seed": int,
    "eval_every": int,
    "grad_clip": float,
    "val_stoi_items": int,
    "phase_iters": int,
    "crop_frames": int,
}
_GAP_KEYS = {
    "gap_mode": str,
    "gap_ms": float,
    "gap_ms_min": float,
    "gap_ms_max": float,
    "placement": str,
}
_MODEL_KEYS = {
    "preset": str,
    "d_model": int,
    "heads": int,
    "ffn": int,
    "fusion_blocks": int,
    "inpaint_blocks": int,
    "visual_dim": int,
    "dropout": float,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            mapping[key] = value
    return mapping


def configs_from_mapping(mapping: dict):
    """Build (TrainConfig, ModelConfig) from a flat key-value mapping."""
    unknown = set(mapping) - set(_TRAIN_KEYS) - set(_GAP_KEYS) - set(_MODEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    train_kwargs = {k: conv(mapping[k]) for k, conv in _TRAIN_KEYS.items() if k in mapping}
    gap = GapPolicy()
    if "gap_mode" in mapping:
        gap = replace(gap, mode=mapping["gap_mode"])
    if "gap_ms" in mapping:
        gap = replace(gap, fixed_duration_ms=float(mapping["gap_ms"]))
    if "gap_ms_min" in mapping or "gap_ms_max" in mapping:
        lo = float(mapping.get("gap_ms_min", gap.duration_ms_range[0]))
        hi = float(mapping.get("gap_ms_max", gap.duration_ms_range[1]))
        gap = replace(gap, duration_ms_range=(lo, hi))
    if "placement" in mapping:
        gap = replace(gap, placement=mapping["placement"])
    train_cfg = TrainConfig(gap_policy=gap, **train_kwargs)

    preset = mapping.get("preset", "paper")
    if preset == "toy":
        model_cfg = ModelConfig.toy()
    elif preset == "paper":
        model_cfg = ModelConfig()
    else:
        raise ConfigError(f"unknown preset {preset!r}")
    overrides = {k: conv(mapping[k]) for k, conv in _MODEL_KEYS.items()
                 if k in mapping and k != "preset"}
    if overrides:
        model_cfg = replace(model_cfg, **overrides)
    return train_cfg, model_cfg
