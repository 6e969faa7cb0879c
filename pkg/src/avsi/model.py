"""Audio-visual inpainting network.

Per-frame MLPs embed the masked magnitude spectrogram and the visual
feature sequence into a shared width; sinusoidal positional encodings
(restarting at zero per modality) and learned modality vectors are added
before the two token sequences are concatenated along time, audio first.
A fusion encoder and an inpainting stack of pre-norm transformer blocks
process the joint sequence; the audio positions feed a linear head whose
softplus output is the predicted log1p magnitude, exponentiated back to
the magnitude domain for compositing.

With an empty visual sequence the identical code path is the audio-only
variant.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .corruption import composite
from .exceptions import ConfigError, InvalidInput
from .nn.tensor import Tensor

CHECKPOINT_PARAM_PREFIX = "param/"


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 512
    heads: int = 8
    ffn: int = 1024
    fusion_blocks: int = 6
    inpaint_blocks: int = 7
    num_bins: int = 257
    visual_dim: int = 768
    audio_rate: float = 62.5
    video_rate: float = 25.0
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by {self.heads} heads")
        for field in ("d_model", "heads", "ffn", "fusion_blocks", "inpaint_blocks", "num_bins", "visual_dim"):
            if getattr(self, field) < 1:
                raise ConfigError(f"{field} must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")

    @staticmethod
    def toy(visual_dim: int = 32, dropout: float = 0.1) -> "ModelConfig":
        """Small preset for CI-scale experiments: 64-wide, 2+2 blocks."""
        return ModelConfig(
            d_model=64,
            heads=2,
            ffn=128,
            fusion_blocks=2,
            inpaint_blocks=2,
            visual_dim=visual_dim,
            dropout=dropout,
        )


@dataclass
class VisualFeatures:
    """Visual feature sequence, one row per frame at a fixed frame rate."""

    feats: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        self.feats = np.asarray(self.feats, dtype=np.float64)
        if self.feats.ndim != 2 or self.feats.shape[0] < 1:
            raise InvalidInput("visual features must be a nonempty frames x width matrix")
        if not np.all(np.isfinite(self.feats)):
            raise InvalidInput("visual features contain non-finite values")
        if self.fps <= 0:
            raise InvalidInput("fps must be positive")

    @property
    def num_frames(self) -> int:
        return self.feats.shape[0]

    @property
    def width(self) -> int:
        return self.feats.shape[1]


@dataclass
class AvEmbedding:
    """Fused token sequence with the span of each modality."""

    tokens: Tensor
    audio_span: tuple
    visual_span: tuple


def sinusoid_encoding(length: int, dim: int, dtype=np.float32, step: float = 1.0) -> np.ndarray:
    """Standard sine/cosine positional table, shape (length, dim).

    ``step`` spaces the positions (e.g. 2.5 audio frames per video frame
    so both modalities share one time axis)."""
    pos = step * np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / dim)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


_BLOCK_KEYS = (
    "ln1_gain",
    "ln1_bias",
    "wq",
    "bq",
    "wk",
    "bk",
    "wv",
    "bv",
    "wo",
    "bo",
    "ln2_gain",
    "ln2_bias",
    "ffn_w1",
    "ffn_b1",
    "ffn_w2",
    "ffn_b2",
)


class InpaintingModel:
    """Fusion encoder + inpainting stack over concatenated AV tokens."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = nn.ParamStore()
        self.norm_mean = 0.0
        self.norm_std = 1.0
        rng = np.random.default_rng(seed)

        d = config.d_model
        self._add_linear(rng, "audio_in/1", config.num_bins, d)
        self._add_linear(rng, "audio_in/2", d, d)
        self._add_linear(rng, "visual_in/1", config.visual_dim, d)
        self._add_linear(rng, "visual_in/2", d, d)
        self.params.add("modality/audio", rng.normal(0.0, 0.02, d).astype(self.dtype))
        self.params.add("modality/visual", rng.normal(0.0, 0.02, d).astype(self.dtype))
        if np.array_equal(
            self.params["modality/audio"].data, self.params["modality/visual"].data
        ):
            raise ConfigError("modality encodings must differ after init")

        self._fusion = [self._add_block(rng, f"fusion{i}") for i in range(config.fusion_blocks)]
        self._inpaint = [self._add_block(rng, f"inpaint{i}") for i in range(config.inpaint_blocks)]
        self.params.add("final_ln/gain", np.ones(d, dtype=self.dtype))
        self.params.add("final_ln/bias", np.zeros(d, dtype=self.dtype))
        self._add_linear(rng, "head", d, config.num_bins)

    # -- construction helpers -------------------------------------------------

    def _xavier(self, rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, (fan_in, fan_out)).astype(self.dtype)

    def _add_linear(self, rng, name: str, fan_in: int, fan_out: int):
        self.params.add(f"{name}/w", self._xavier(rng, fan_in, fan_out))
        self.params.add(f"{name}/b", np.zeros(fan_out, dtype=self.dtype))

    def _add_block(self, rng, prefix: str) -> dict:
        d, f = self.config.d_model, self.config.ffn
        block = {}
        block["ln1_gain"] = self.params.add(f"{prefix}/ln1_gain", np.ones(d, dtype=self.dtype))
        block["ln1_bias"] = self.params.add(f"{prefix}/ln1_bias", np.zeros(d, dtype=self.dtype))
        for key, (fi, fo) in {
            "wq": (d, d),
            "wk": (d, d),
            "wv": (d, d),
            "wo": (d, d),
        }.items():
            block[key] = self.params.add(f"{prefix}/{key}", self._xavier(rng, fi, fo))
            bkey = "b" + key[1:]
            block[bkey] = self.params.add(f"{prefix}/{bkey}", np.zeros(fo, dtype=self.dtype))
        block["ln2_gain"] = self.params.add(f"{prefix}/ln2_gain", np.ones(d, dtype=self.dtype))
        block["ln2_bias"] = self.params.add(f"{prefix}/ln2_bias", np.zeros(d, dtype=self.dtype))
        block["ffn_w1"] = self.params.add(f"{prefix}/ffn_w1", self._xavier(rng, d, f))
        block["ffn_b1"] = self.params.add(f"{prefix}/ffn_b1", np.zeros(f, dtype=self.dtype))
        block["ffn_w2"] = self.params.add(f"{prefix}/ffn_w2", self._xavier(rng, f, d))
        block["ffn_b2"] = self.params.add(f"{prefix}/ffn_b2", np.zeros(d, dtype=self.dtype))
        return block

    # -- normalization ---------------------------------------------------------

    def set_normalization(self, mean_: float, std: float) -> None:
        if std <= 0 or not np.isfinite(mean_) or not np.isfinite(std):
            raise InvalidInput("normalization needs finite mean and positive std")
        self.norm_mean = float(mean_)
        self.norm_std = float(std)

    def normalize_log(self, mag: np.ndarray) -> np.ndarray:
        """Magnitude -> standardized log1p domain."""
        return (np.log1p(np.asarray(mag, dtype=np.float64)) - self.norm_mean) / self.norm_std

    def log_to_norm(self, log_mag: np.ndarray) -> np.ndarray:
        return (log_mag - self.norm_mean) / self.norm_std

    # -- forward ---------------------------------------------------------------

    def _check_audio(self, masked: np.ndarray):
        if masked.ndim != 3 or masked.shape[1] != self.config.num_bins:
            raise ConfigError(
                f"expected batch x {self.config.num_bins} x L magnitudes, got {masked.shape}"
            )

    def _frontend(self, x: np.ndarray, prefix: str) -> Tensor:
        h = nn.elu(nn.linear(Tensor(x.astype(self.dtype)), self.params[f"{prefix}/1/w"], self.params[f"{prefix}/1/b"]))
        return nn.elu(nn.linear(h, self.params[f"{prefix}/2/w"], self.params[f"{prefix}/2/b"]))

    def embed_audio(self, masked_batch: np.ndarray) -> Tensor:
        """Per-frame audio tokens, (batch, L, d_model); no temporal mixing."""
        self._check_audio(masked_batch)
        feats = np.swapaxes(self.normalize_log(masked_batch), 1, 2)
        return self._frontend(feats, "audio_in")

    def embed_visual(self, visual_batch: np.ndarray) -> Tensor:
        """Per-frame visual tokens, (batch, T, d_model)."""
        if visual_batch.ndim != 3 or visual_batch.shape[2] != self.config.visual_dim:
            raise ConfigError(
                f"expected batch x T x {self.config.visual_dim} features, got {visual_batch.shape}"
            )
        return self._frontend(visual_batch, "visual_in")

    def fuse(self, audio_tokens: Tensor, visual_tokens: Tensor = None) -> AvEmbedding:
        """Add positional + modality encodings and concatenate, audio first.

        Positions restart at 0 for each modality; visual positions are
        spaced by the audio/video rate ratio so equal encoding values
        mean equal wall-clock times across modalities.
        """
        num_audio = audio_tokens.shape[-2]
        pe_a = sinusoid_encoding(num_audio, self.config.d_model, self.dtype)
        a = nn.add(nn.add(audio_tokens, pe_a), self.params["modality/audio"])
        if visual_tokens is None or visual_tokens.shape[-2] == 0:
            return AvEmbedding(tokens=a, audio_span=(0, num_audio), visual_span=(num_audio, num_audio))
        num_visual = visual_tokens.shape[-2]
        pe_v = sinusoid_encoding(
            num_visual, self.config.d_model, self.dtype,
            step=self.config.audio_rate / self.config.video_rate,
        )
        v = nn.add(nn.add(visual_tokens, pe_v), self.params["modality/visual"])
        tokens = nn.concat([a, v], axis=-2)
        return AvEmbedding(
            tokens=tokens,
            audio_span=(0, num_audio),
            visual_span=(num_audio, num_audio + num_visual),
        )

    def predict_log_batch(
        self,
        masked_batch: np.ndarray,
        visual_batch: np.ndarray = None,
        training: bool = False,
        rng: np.random.Generator = None,
    ) -> Tensor:
        """Predicted log1p magnitude tokens, (batch, L, num_bins), >= 0.

        Predicts the whole spectrogram, corrupted and uncorrupted columns
        alike; compositing against known columns happens downstream.
        """
        audio_tokens = self.embed_audio(masked_batch)
        visual_tokens = None
        if visual_batch is not None and visual_batch.shape[1] > 0:
            visual_tokens = self.embed_visual(visual_batch)
        fused = self.fuse(audio_tokens, visual_tokens)

        x = fused.tokens
        p = self.config.dropout
        for block in self._fusion:
            x = nn.transformer_block(x, block, self.config.heads, p, rng, training)
        for block in self._inpaint:
            x = nn.transformer_block(x, block, self.config.heads, p, rng, training)
        x = nn.layer_norm(x, self.params["final_ln/gain"], self.params["final_ln/bias"])
        lo, hi = fused.audio_span
        x = nn.narrow(x, -2, lo, hi - lo)
        z = nn.linear(x, self.params["head/w"], self.params["head/b"])
        return nn.softplus(z)

    def forward(self, masked_mag: np.ndarray, visual: VisualFeatures = None) -> np.ndarray:
        """Full-spectrogram magnitude estimate, num_bins x L, all >= 0."""
        masked_mag = np.asarray(masked_mag, dtype=np.float64)
        if masked_mag.ndim != 2:
            raise InvalidInput("masked magnitude must be 2-D (bins x frames)")
        vb = None
        if visual is not None and visual.num_frames > 0:
            vb = visual.feats[None].astype(self.dtype)
        with nn.no_grad():
            h = self.predict_log_batch(masked_mag[None], vb, training=False)
        log_mag = h.data[0].astype(np.float64).T
        return np.expm1(log_mag)

    def inpaint(self, masked_mag: np.ndarray, visual, mask: np.ndarray) -> np.ndarray:
        """Composite the network estimate into the corrupted columns only.

        Uncorrupted columns are returned bit-identical to the input.
        """
        predicted = self.forward(masked_mag, visual)
        return composite(np.asarray(masked_mag, dtype=np.float64), predicted, mask)

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        arrays = {
            "meta/d_model": np.int64(self.config.d_model),
            "meta/heads": np.int64(self.config.heads),
            "meta/ffn": np.int64(self.config.ffn),
            "meta/fusion_blocks": np.int64(self.config.fusion_blocks),
            "meta/inpaint_blocks": np.int64(self.config.inpaint_blocks),
            "meta/num_bins": np.int64(self.config.num_bins),
            "meta/visual_dim": np.int64(self.config.visual_dim),
            "meta/audio_rate": np.float64(self.config.audio_rate),
            "meta/video_rate": np.float64(self.config.video_rate),
            "meta/dropout": np.float64(self.config.dropout),
            "meta/norm_mean": np.float64(self.norm_mean),
            "meta/norm_std": np.float64(self.norm_std),
        }
        for name, tensor in self.params.items():
            arrays[CHECKPOINT_PARAM_PREFIX + name] = tensor.data
        nn.save_arrays(path, arrays)

    @staticmethod
    def load(path) -> "InpaintingModel":
        arrays = nn.load_arrays(path)
        try:
            config = ModelConfig(
                d_model=int(arrays["meta/d_model"]),
                heads=int(arrays["meta/heads"]),
                ffn=int(arrays["meta/ffn"]),
                fusion_blocks=int(arrays["meta/fusion_blocks"]),
                inpaint_blocks=int(arrays["meta/inpaint_blocks"]),
                num_bins=int(arrays["meta/num_bins"]),
                visual_dim=int(arrays["meta/visual_dim"]),
                audio_rate=float(arrays["meta/audio_rate"]),
                video_rate=float(arrays["meta/video_rate"]),
                dropout=float(arrays["meta/dropout"]),
            )
        except KeyError as exc:
            raise InvalidInput(f"checkpoint is missing metadata record {exc}") from exc
        state = {
            name[len(CHECKPOINT_PARAM_PREFIX) :]: arr
            for name, arr in arrays.items()
            if name.startswith(CHECKPOINT_PARAM_PREFIX)
        }
        dtype = state["head/w"].dtype
        model = InpaintingModel(config, seed=0, dtype=dtype)
        model.params.load_state_dict(state)
        model.set_normalization(float(arrays["meta/norm_mean"]), float(arrays["meta/norm_std"]))
        return model

    def with_config(self, **overrides) -> ModelConfig:
        return replace(self.config, **overrides)
