"""Operator entry points: synth-data, corrupt, train, inpaint, evaluate.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage (bad flags, missing
inputs, mismatched shapes). Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data_io, train as train_mod
from .corruption import (
    GapPolicy,
    GapSpec,
    apply_mask,
    build_mask,
    ms_to_frames,
    sample_gap,
    zero_gap_samples,
)
from .dataset import crop_item, prepare_item
from .dsp import StftConfig, Waveform, istft, magnitude, reconstruct_phase, stft
from .exceptions import AvsiError, ConfigError, InvalidInput
from .metrics import EVAL_SETUPS, evaluate_set, mae_region
from .model import InpaintingModel, ModelConfig
from .synth import SyntheticSceneSpec, make_synthetic_dataset
from .train import Trainer


class UsageError(AvsiError):
    """Maps to exit code 2."""


def _load_model(path) -> InpaintingModel:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return InpaintingModel.load(path)


def _entry_items(entries, cfg, crop_seconds=None, seed=0, splits=None):
    items = []
    for index, entry in enumerate(entries):
        if splits is not None and entry.split not in splits:
            continue
        wave = data_io.read_wav(entry.wav_path)
        visual = data_io.read_features(entry.feature_path) if entry.feature_path else None
        if crop_seconds is not None:
            rng = np.random.default_rng([seed, 4, index])
            items.append(crop_item(entry.item_id, wave, visual, crop_seconds, rng, cfg,
                                   split=entry.split))
        else:
            items.append(prepare_item(entry.item_id, wave, visual, cfg, split=entry.split))
    return items


def cmd_synth_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSceneSpec(
        duration_s=args.duration, visual_dim=args.dv, visual_noise=args.noise
    )
    scenes = make_synthetic_dataset(spec, args.n, args.seed)
    entries = []
    num_val = min(args.val, len(scenes))
    for index, scene in enumerate(scenes):
        wav_name = f"{scene.item_id}.wav"
        feat_name = f"{scene.item_id}.avf"
        data_io.write_wav(scene.waveform, out / wav_name)
        data_io.write_features(scene.visual, out / feat_name)
        split = "val" if index >= len(scenes) - num_val else "train"
        entries.append(
            data_io.ManifestEntry(scene.item_id, wav_name, feat_name, split=split)
        )
    data_io.write_manifest(entries, out / "manifest.tsv")
    print(f"wrote {len(entries)} items to {out}")
    return 0


def cmd_corrupt(args) -> int:
    cfg = StftConfig()
    entries = data_io.read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    placement = args.placement
    new_entries = []
    for index, entry in enumerate(entries):
        wave = data_io.read_wav(entry.wav_path)
        item = prepare_item(entry.item_id, wave, None, cfg)
        if args.setup == "random":
            policy = GapPolicy(mode="random-duration", placement=placement)
        else:
            policy = GapPolicy(
                mode="fixed-duration", fixed_duration_ms=float(args.setup),
                placement=placement,
            )
        rng = np.random.default_rng([args.seed, index])
        gap = sample_gap(policy, item.num_frames, activity=item.activity, rng=rng, cfg=cfg)
        wav_rel = Path(entry.wav_path).resolve()
        feat_rel = Path(entry.feature_path).resolve() if entry.feature_path else None
        new_entries.append(
            data_io.ManifestEntry(entry.item_id, wav_rel, feat_rel, entry.split, gap)
        )
        if args.demo_wavs:
            demo = Waveform(zero_gap_samples(wave.samples, gap, cfg), wave.sample_rate)
            data_io.write_wav(demo, out / f"{entry.item_id}_corrupted.wav")
    data_io.write_manifest(new_entries, out / "manifest.tsv")
    print(f"annotated {len(new_entries)} items ({args.setup} setup) in {out}")
    return 0


def cmd_train(args) -> int:
    mapping = train_mod.read_config_file(args.config) if args.config else {}
    if args.preset:
        mapping["preset"] = args.preset
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    train_cfg, model_cfg = train_mod.configs_from_mapping(mapping)

    cfg = StftConfig()
    entries = data_io.read_manifest(args.manifest)
    train_items = _entry_items(entries, cfg, crop_seconds=2.0, seed=train_cfg.seed,
                               splits={"train"})
    val_items = _entry_items(entries, cfg, crop_seconds=2.0, seed=train_cfg.seed,
                             splits={"val"})
    if not train_items:
        raise UsageError("manifest has no train-split items")

    use_visual = not args.ao and all(it.visual is not None for it in train_items)
    if use_visual:
        widths = {it.visual.width for it in train_items}
        if len(widths) != 1:
            raise UsageError(f"inconsistent feature widths: {sorted(widths)}")
        model_cfg = ModelConfig(**{**model_cfg.__dict__, "visual_dim": widths.pop()})

    model = InpaintingModel(model_cfg, seed=train_cfg.seed)
    trainer = Trainer(model, train_items, train_cfg, val_items=val_items,
                      use_visual=use_visual, stft_cfg=cfg)
    out = Path(args.ckpt_out)
    out.mkdir(parents=True, exist_ok=True)
    rows = trainer.run(csv_path=out / "train_log.csv", ckpt_path=out / "model.ckpt")
    final = rows[-1][1] if rows else float("nan")
    print(f"trained {train_cfg.max_steps} steps (final loss {final:.4f}); "
          f"checkpoint at {out / 'model.ckpt'}")
    return 0


def cmd_inpaint(args) -> int:
    cfg = StftConfig()
    model = _load_model(args.ckpt)
    wave = data_io.read_wav(args.wav)
    spec = stft(wave, cfg)
    mag = magnitude(spec)
    num_frames = mag.shape[1]

    start = round(args.gap_start_ms * wave.sample_rate / (1000.0 * cfg.hop))
    gap = GapSpec(start_frame=start, num_frames=ms_to_frames(args.gap_ms, cfg))
    if gap.stop_frame > num_frames:
        raise UsageError(
            f"gap [{gap.start_frame}, {gap.stop_frame}) exceeds the {num_frames} frames"
        )
    mask = build_mask(gap, num_frames)
    masked = apply_mask(mag, mask)

    visual = None
    if args.features:
        visual = data_io.read_features(args.features)
        if visual.width != model.config.visual_dim:
            raise UsageError(
                f"feature width {visual.width} does not match the model's "
                f"{model.config.visual_dim}"
            )
    restored = model.inpaint(masked, visual, mask)
    rec = reconstruct_phase(restored, cfg, iters=args.iters, length=len(wave))
    data_io.write_wav(istft(rec, cfg), args.out)

    reference = data_io.read_wav(args.reference) if args.reference else wave
    ref_mag = magnitude(stft(reference, cfg))
    sidecar = {
        "gap_start_frame": gap.start_frame,
        "gap_frames": gap.num_frames,
        "mae_corrupted": mae_region(restored, ref_mag, mask, "corrupted"),
        "mae_uncorrupted": mae_region(restored, ref_mag, mask, "uncorrupted"),
    }
    Path(str(args.out) + ".metrics.json").write_text(json.dumps(sidecar, indent=2))
    print(f"wrote {args.out} (corrupted-region MAE {sidecar['mae_corrupted']:.4f})")
    return 0


def cmd_evaluate(args) -> int:
    cfg = StftConfig()
    model = None if args.baseline else _load_model(args.ckpt)
    entries = data_io.read_manifest(args.manifest)
    items = _entry_items(entries, cfg)
    if not items:
        raise UsageError("manifest has no items")
    widths = {it.visual.width for it in items if it.visual is not None}
    if model is not None and not args.ao and widths and widths != {model.config.visual_dim}:
        raise UsageError(
            f"feature widths {sorted(widths)} do not match the model's "
            f"{model.config.visual_dim}"
        )
    report = evaluate_set(
        model,
        items,
        setup=args.setup,
        seed=args.seed,
        use_visual=not args.ao,
        phase_iters=args.iters,
        jobs=args.jobs,
        stft_cfg=cfg,
        placement=args.placement,
    )
    report.write_csv(args.report)
    print(
        f"evaluated {len(report.rows)} items (setup {args.setup}): "
        f"mae_corrupted {report.mean_mae_corrupted:.4f}, stoi {report.mean_stoi:.4f}, "
        f"{report.num_skipped} skipped -> {args.report}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avsi", description="Audio-visual speech inpainting toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic audio-visual corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--dv", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--val", type=int, default=0, help="tag the last N items as val split")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("corrupt", help="sample gaps and write an annotated manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--setup", choices=EVAL_SETUPS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--placement", choices=["uniform", "active-speech-only"],
                   default="uniform")
    p.add_argument("--demo-wavs", action="store_true",
                   help="also write audibly corrupted WAVs")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None, help="flat key = value file")
    p.add_argument("--ckpt-out", required=True)
    p.add_argument("--preset", choices=["paper", "toy"], default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--ao", action="store_true", help="ignore visual features")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("inpaint", help="restore a gap in one waveform")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--gap-start-ms", type=float, required=True)
    p.add_argument("--gap-ms", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=50, help="phase reconstruction iterations")
    p.add_argument("--reference", default=None, help="clean reference WAV for the sidecar")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("evaluate", help="score a model over a manifest")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--setup", choices=EVAL_SETUPS, required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--ao", action="store_true", help="ignore visual features")
    p.add_argument("--placement", choices=["uniform", "active-speech-only"],
                   default="uniform")
    p.add_argument("--baseline", action="store_true",
                   help="score the corrupted input instead of a model")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not args.baseline and not args.ckpt:
        print(json.dumps({"error": "evaluate needs --ckpt unless --baseline"}),
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    except (ConfigError, InvalidInput) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    except (AvsiError, OSError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
