"""Command-line surface: flags, exit codes, and a small pipeline run."""

import json

import numpy as np
import pytest

from avsi.cli import main
from avsi.data_io import read_manifest, read_wav


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    code = main([
        "synth-data", "--out", str(out), "--n", "3", "--seed", "7",
        "--dv", "8", "--val", "1",
    ])
    assert code == 0
    return out


class TestSynthData:
    def test_manifest_lists_all_items(self, corpus):
        entries = read_manifest(corpus / "manifest.tsv")
        assert len(entries) == 3
        assert [e.split for e in entries] == ["train", "train", "val"]
        for entry in entries:
            assert entry.wav_path.is_file()
            assert entry.feature_path.is_file()

    def test_deterministic_per_seed(self, corpus, tmp_path):
        again = tmp_path / "again"
        assert main(["synth-data", "--out", str(again), "--n", "3", "--seed", "7",
                     "--dv", "8", "--val", "1"]) == 0
        for name in ("synth0000.wav", "synth0001.avf", "manifest.tsv"):
            assert (again / name).read_bytes() == (corpus / name).read_bytes()

    def test_wav_spectral_peak_in_f0_band(self, corpus):
        from avsi.dsp import StftConfig, magnitude, stft

        wave = read_wav(corpus / "synth0000.wav")
        mag = magnitude(stft(wave, StftConfig()))
        mid = mag[:, 30:96]
        peaks_hz = mid.argmax(axis=0) * 31.25
        active = mid.max(axis=0) > 0.1 * mid.max()
        assert np.all((peaks_hz[active] >= 60) & (peaks_hz[active] <= 340))


class TestCorrupt:
    def test_fixed_setup_gap_frames(self, corpus, tmp_path):
        out = tmp_path / "c400"
        code = main(["corrupt", "--manifest", str(corpus / "manifest.tsv"),
                     "--setup", "400", "--seed", "3", "--out", str(out)])
        assert code == 0
        entries = read_manifest(out / "manifest.tsv")
        assert len(entries) == 3
        assert all(e.gap is not None and e.gap.num_frames == 25 for e in entries)

    def test_seed_determinism(self, corpus, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["corrupt", "--manifest", str(corpus / "manifest.tsv"),
                  "--setup", "random", "--seed", "9", "--out", str(out)])
            outs.append([(e.gap.start_frame, e.gap.num_frames)
                         for e in read_manifest(out / "manifest.tsv")])
        assert outs[0] == outs[1]

    def test_active_placement_respects_detector(self, corpus, tmp_path):
        from avsi.dataset import prepare_item

        out = tmp_path / "active"
        main(["corrupt", "--manifest", str(corpus / "manifest.tsv"),
              "--setup", "160", "--seed", "1", "--out", str(out),
              "--placement", "active-speech-only"])
        for entry in read_manifest(out / "manifest.tsv"):
            item = prepare_item(entry.item_id, read_wav(entry.wav_path))
            assert item.activity[entry.gap.start_frame : entry.gap.stop_frame].all()


class TestErrors:
    def test_bad_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["corrupt", "--setup", "999"])
        assert exc.value.code == 2

    def test_missing_checkpoint_exits_2(self, corpus, tmp_path, capsys):
        code = main(["inpaint", "--ckpt", str(tmp_path / "none.ckpt"),
                     "--wav", str(corpus / "synth0000.wav"),
                     "--gap-start-ms", "500", "--gap-ms", "400",
                     "--out", str(tmp_path / "o.wav")])
        assert code == 2
        err = capsys.readouterr().err.strip()
        assert json.loads(err)["error"].startswith("checkpoint not found")

    def test_feature_width_mismatch_exits_2(self, corpus, tmp_path, capsys):
        from avsi.model import InpaintingModel, ModelConfig

        ckpt = tmp_path / "m.ckpt"
        InpaintingModel(ModelConfig.toy(visual_dim=5), seed=0).save(ckpt)
        code = main(["inpaint", "--ckpt", str(ckpt),
                     "--wav", str(corpus / "synth0000.wav"),
                     "--features", str(corpus / "synth0000.avf"),
                     "--gap-start-ms", "500", "--gap-ms", "400",
                     "--out", str(tmp_path / "o.wav")])
        assert code == 2
        assert "width" in json.loads(capsys.readouterr().err.strip())["error"]

    def test_evaluate_requires_ckpt_or_baseline(self, corpus, tmp_path, capsys):
        code = main(["evaluate", "--manifest", str(corpus / "manifest.tsv"),
                     "--setup", "160", "--report", str(tmp_path / "r.csv")])
        assert code == 2


@pytest.fixture(scope="module")
def ckpt(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "train.cfg"
    cfg.write_text("preset = toy\nvisual_dim = 8\nmax_steps = 8\nbatch = 2\n"
                   "eval_every = 8\nseed = 0\nval_stoi_items = 0\nphase_iters = 4\n")
    code = main(["train", "--manifest", str(corpus / "manifest.tsv"),
                 "--config", str(cfg), "--ckpt-out", str(out)])
    assert code == 0
    assert (out / "train_log.csv").is_file()
    return out / "model.ckpt"


class TestInpaintAndEvaluate:

    def test_inpaint_writes_wav_and_sidecar(self, corpus, ckpt, tmp_path):
        out = tmp_path / "restored.wav"
        code = main(["inpaint", "--ckpt", str(ckpt),
                     "--wav", str(corpus / "synth0000.wav"),
                     "--features", str(corpus / "synth0000.avf"),
                     "--gap-start-ms", "600", "--gap-ms", "400",
                     "--out", str(out), "--iters", "8"])
        assert code == 0
        restored = read_wav(out)
        original = read_wav(corpus / "synth0000.wav")
        assert len(restored) == len(original)
        sidecar = json.loads((tmp_path / "restored.wav.metrics.json").read_text())
        assert sidecar["gap_frames"] == 25
        assert sidecar["mae_corrupted"] >= 0.0
        assert sidecar["mae_uncorrupted"] >= 0.0

    def test_evaluate_writes_report(self, corpus, ckpt, tmp_path):
        report = tmp_path / "report.csv"
        code = main(["evaluate", "--ckpt", str(ckpt),
                     "--manifest", str(corpus / "manifest.tsv"),
                     "--setup", "400", "--seed", "2", "--iters", "6",
                     "--report", str(report)])
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "utterance_id,setup,gap_ms,mae_corrupted,stoi,skipped"
        assert len(lines) == 4

    def test_evaluate_baseline_row_structure(self, corpus, tmp_path):
        report = tmp_path / "baseline.csv"
        code = main(["evaluate", "--baseline",
                     "--manifest", str(corpus / "manifest.tsv"),
                     "--setup", "400", "--seed", "2", "--iters", "6",
                     "--report", str(report)])
        assert code == 0
        assert len(report.read_text().strip().splitlines()) == 4
