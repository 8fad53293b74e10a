"""The two-stream classifier: residual CNN on the apex frame, stacked
LSTM on the flow-feature matrix, L2-normalized concatenation, dropout,
and a 3-class softmax head.

Either stream can also run alone (``ModelConfig.stream``), in which case
its normalized embedding feeds the classifier directly; that is how the
per-stream ablation rows of an evaluation report are produced.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, concat, dropout, global_avg_pool, l2_normalize, matmul, max_pool2d, softmax
from .binio import Reader, atomic_write
from .dataset import CLASS_ORDER, Class3
from .nn import BatchNorm2d, Conv2d, LSTMLayer, Linear

__all__ = ["ModelConfig", "ATNet", "Prediction", "save_checkpoint", "load_checkpoint",
           "CheckpointMismatchError"]

MAGIC = b"ATNW"
VERSION = 1

STREAMS = ("fusion", "spatial", "temporal")


class CheckpointMismatchError(ValueError):
    """Checkpoint parameters do not fit the declared configuration."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs. Desk defaults train in seconds; ``paper_scale``
    selects the full-size topology (224-px input, 512-d embeddings,
    512-unit LSTM layers) for shape verification."""

    image_size: int = 32
    embed_dim: int = 32
    stem_width: int = 8
    stem_kernel: int = 3
    stem_stride: int = 1
    stem_pool: bool = False
    stage_widths: tuple[int, ...] = (8, 16, 32)
    blocks_per_stage: tuple[int, ...] = (1, 1, 1)
    lstm_hidden: int = 32
    lstm_layers: int = 2
    dropout_p: float = 0.5
    classes: int = 3
    feature_dim: int = 128
    time_steps: int = 64
    stream: str = "fusion"

    def __post_init__(self):
        if len(self.stage_widths) != len(self.blocks_per_stage):
            raise ValueError("stage_widths and blocks_per_stage lengths differ")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.stream not in STREAMS:
            raise ValueError(f"stream must be one of {STREAMS}, got {self.stream!r}")
        if self.lstm_layers < 1:
            raise ValueError("lstm_layers must be >= 1")
        downsample = self.stem_stride * (2 if self.stem_pool else 1) * 2 ** (len(self.stage_widths) - 1)
        if self.image_size % downsample:
            raise ValueError(f"image_size {self.image_size} not divisible by total stride {downsample}")

    @classmethod
    def paper_scale(cls, stream: str = "fusion") -> "ModelConfig":
        return cls(image_size=224, embed_dim=512, stem_width=64, stem_kernel=7,
                   stem_stride=2, stem_pool=True, stage_widths=(64, 128, 256, 512),
                   blocks_per_stage=(1, 1, 1, 1), lstm_hidden=512, stream=stream)

    @property
    def head_dim(self) -> int:
        return 2 * self.embed_dim if self.stream == "fusion" else self.embed_dim


@dataclass(frozen=True)
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: Class3

    def __post_init__(self):
        if not ((self.probabilities > 0).all() and abs(self.probabilities.sum() - 1.0) < 1e-12):
            raise ValueError("probabilities must be positive and sum to 1")


class _ResidualBlock:
    """conv-BN-ReLU-conv-BN with identity skip, or a 1x1-conv + BN
    projection skip when the shape changes; ReLU after the sum."""

    def __init__(self, in_ch: int, out_ch: int, stride: int, rng):
        self.conv1 = Conv2d(in_ch, out_ch, 3, stride=stride, rng=rng)
        self.bn1 = BatchNorm2d(out_ch)
        self.conv2 = Conv2d(out_ch, out_ch, 3, stride=1, rng=rng)
        self.bn2 = BatchNorm2d(out_ch)
        self.projection = None
        if stride != 1 or in_ch != out_ch:
            self.projection = (Conv2d(in_ch, out_ch, 1, stride=stride, pad=0, rng=rng),
                               BatchNorm2d(out_ch))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        out = self.bn1(self.conv1(x), training).relu()
        out = self.bn2(self.conv2(out), training)
        if self.projection is not None:
            skip = self.projection[1](self.projection[0](x), training)
        else:
            skip = x
        return (out + skip).relu()

    def modules(self):
        mods = [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2), ("bn2", self.bn2)]
        if self.projection is not None:
            mods += [("proj_conv", self.projection[0]), ("proj_bn", self.projection[1])]
        return mods


class _SpatialStream:
    def __init__(self, config: ModelConfig, rng):
        self.config = config
        self.stem = Conv2d(1, config.stem_width, config.stem_kernel,
                           stride=config.stem_stride, rng=rng)
        self.stem_bn = BatchNorm2d(config.stem_width)
        self.blocks: list[tuple[str, _ResidualBlock]] = []
        in_ch = config.stem_width
        for s, (width, count) in enumerate(zip(config.stage_widths, config.blocks_per_stage)):
            for b in range(count):
                stride = 2 if (s > 0 and b == 0) else 1
                self.blocks.append((f"stage{s}.block{b}", _ResidualBlock(in_ch, width, stride, rng)))
                in_ch = width
        self.proj = Linear(in_ch, config.embed_dim, rng=rng)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        out = self.stem_bn(self.stem(x), training).relu()
        if self.config.stem_pool:
            out = max_pool2d(out, 2)
        for _, block in self.blocks:
            out = block(out, training)
        return self.proj(global_avg_pool(out))

    def modules(self):
        mods = [("stem", self.stem), ("stem_bn", self.stem_bn)]
        for name, block in self.blocks:
            mods += [(f"{name}.{sub}", mod) for sub, mod in block.modules()]
        mods.append(("proj", self.proj))
        return mods


class _TemporalStream:
    def __init__(self, config: ModelConfig, rng):
        self.layers = []
        in_dim = config.feature_dim
        for _ in range(config.lstm_layers):
            self.layers.append(LSTMLayer(in_dim, config.lstm_hidden, rng=rng))
            in_dim = config.lstm_hidden
        self.proj = Linear(config.lstm_hidden, config.embed_dim, rng=rng)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        out = x
        for layer in self.layers:
            out = layer(out)
        return self.proj(out[:, -1, :])

    def modules(self):
        mods = [(f"lstm{i}", layer) for i, layer in enumerate(self.layers)]
        mods.append(("proj", self.proj))
        return mods


class ATNet:
    """Two-stream network; construct with a config and a seeded Generator."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.config = config
        self.spatial = _SpatialStream(config, rng) if config.stream != "temporal" else None
        self.temporal = _TemporalStream(config, rng) if config.stream != "spatial" else None
        self.head = Linear(config.head_dim, config.classes, rng=rng)

    # -- forward -----------------------------------------------------------

    def spatial_forward(self, apex: Tensor, training: bool = False) -> Tensor:
        """(N, S, S) or (N, 1, S, S) apex frames -> (N, D) embeddings."""
        if self.spatial is None:
            raise ValueError("model has no spatial stream")
        if apex.data.ndim == 3:
            n, h, w = apex.data.shape
            apex = apex.reshape(n, 1, h, w)
        s = self.config.image_size
        if apex.data.shape[1:] != (1, s, s):
            raise ValueError(f"expected apex batch (N, 1, {s}, {s}), got {apex.data.shape}")
        return self.spatial(apex, training)

    def temporal_forward(self, features: Tensor, training: bool = False) -> Tensor:
        """(N, T, F) feature matrices -> (N, D) embeddings."""
        if self.temporal is None:
            raise ValueError("model has no temporal stream")
        expected = (self.config.time_steps, self.config.feature_dim)
        if features.data.ndim != 3 or features.data.shape[1:] != expected:
            raise ValueError(f"expected feature batch (N, {expected[0]}, {expected[1]}), "
                             f"got {features.data.shape}")
        return self.temporal(features, training)

    def _head_logits(self, embeddings: list[Tensor], training: bool, rng) -> Tensor:
        normalized = [l2_normalize(e, axis=-1) for e in embeddings]
        fused = normalized[0] if len(normalized) == 1 else concat(normalized, axis=1)
        fused = dropout(fused, self.config.dropout_p, rng, training)
        return self.head(fused)

    def forward(self, apex: Tensor | None, features: Tensor | None,
                training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Batched logits for whichever streams the config enables."""
        embeddings = []
        if self.config.stream in ("fusion", "spatial"):
            embeddings.append(self.spatial_forward(apex, training))
        if self.config.stream in ("fusion", "temporal"):
            embeddings.append(self.temporal_forward(features, training))
        return self._head_logits(embeddings, training, rng)

    def fuse_classify(self, spatial_emb: np.ndarray, temporal_emb: np.ndarray,
                      training: bool = False, rng: np.random.Generator | None = None) -> Prediction:
        """Classify one sample from its two stream embeddings."""
        if self.config.stream != "fusion":
            raise ValueError("fuse_classify needs a fusion-mode model")
        d = self.config.embed_dim
        if np.shape(spatial_emb) != (d,) or np.shape(temporal_emb) != (d,):
            raise ValueError(f"embeddings must both have length {d}, "
                             f"got {np.shape(spatial_emb)} and {np.shape(temporal_emb)}")
        logits = self._head_logits([Tensor(np.asarray(spatial_emb)[None, :]),
                                    Tensor(np.asarray(temporal_emb)[None, :])], training, rng)
        return self._prediction(logits.data[0])

    def predict(self, apex: np.ndarray | None, feature: np.ndarray | None) -> Prediction:
        """Evaluation-mode prediction for a single clip's inputs."""
        apex_t = None if apex is None else Tensor(np.asarray(apex)[None, ...])
        feat_t = None if feature is None else Tensor(np.asarray(feature)[None, ...])
        logits = self.forward(apex_t, feat_t, training=False)
        return self._prediction(logits.data[0])

    @staticmethod
    def _prediction(logits: np.ndarray) -> Prediction:
        probs = softmax(Tensor(logits)).data
        return Prediction(logits=logits.copy(), probabilities=probs,
                          predicted_class=CLASS_ORDER[int(np.argmax(probs))])

    # -- parameter registry ---------------------------------------------------

    def _named_modules(self):
        mods = []
        if self.spatial is not None:
            mods += [(f"spatial.{name}", m) for name, m in self.spatial.modules()]
        if self.temporal is not None:
            mods += [(f"temporal.{name}", m) for name, m in self.temporal.modules()]
        mods.append(("head", self.head))
        return mods

    def params(self) -> list[tuple[str, Tensor]]:
        """Trainable tensors in the fixed serialization order."""
        out = []
        for prefix, module in self._named_modules():
            out += [(f"{prefix}.{name}", t) for name, t in module.params()]
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, module in self._named_modules():
            out += [(f"{prefix}.{name}", b) for name, b in module.buffers()]
        return out

    def load_buffers(self, values: dict[str, np.ndarray]) -> None:
        for prefix, module in self._named_modules():
            if isinstance(module, BatchNorm2d):
                module.load_buffers([values[f"{prefix}.running_mean"],
                                     values[f"{prefix}.running_var"]])


# -- checkpoint format -------------------------------------------------------
#
# magic "ATNW", version u16, u32 config-JSON length + bytes, u32 entry
# count, then per entry: u16 name length + UTF-8 name, u8 ndim, u32 dims,
# float64 little-endian data. Parameters come first in registry order,
# batch-norm running statistics after.


def _encode_entry(name: str, arr: np.ndarray) -> bytes:
    encoded_name = name.encode("utf-8")
    head = struct.pack("<H", len(encoded_name)) + encoded_name
    head += struct.pack("<B", arr.ndim) + b"".join(struct.pack("<I", d) for d in arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def encode_checkpoint(model: ATNet) -> bytes:
    config_json = json.dumps(asdict(model.config), sort_keys=True).encode("utf-8")
    entries = [(n, t.data) for n, t in model.params()] + model.buffers()
    out = MAGIC + struct.pack("<H", VERSION)
    out += struct.pack("<I", len(config_json)) + config_json
    out += struct.pack("<I", len(entries))
    return out + b"".join(_encode_entry(n, a) for n, a in entries)


def decode_checkpoint(payload: bytes) -> ATNet:
    r = Reader(payload, "checkpoint")
    r.expect_magic(MAGIC)
    r.expect_version(VERSION)
    config_raw = r.take(r.u32())
    fields = json.loads(config_raw.decode("utf-8"))
    for key in ("stage_widths", "blocks_per_stage"):
        fields[key] = tuple(fields[key])
    config = ModelConfig(**fields)

    entries: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u16()).decode("utf-8")
        ndim = r.u8()
        shape = tuple(r.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(count * 8), dtype="<f8").reshape(shape)
        entries[name] = data.copy()
    r.done()

    model = ATNet(config, rng=np.random.default_rng(0))
    for name, tensor in model.params():
        if name not in entries:
            raise CheckpointMismatchError(f"checkpoint missing parameter {name}")
        if entries[name].shape != tensor.data.shape:
            raise CheckpointMismatchError(
                f"parameter {name}: checkpoint shape {entries[name].shape} "
                f"does not match config shape {tensor.data.shape}")
        tensor.data = entries[name]
    model.load_buffers(entries)
    return model


def save_checkpoint(path, model: ATNet) -> None:
    atomic_write(path, encode_checkpoint(model))


def load_checkpoint(path) -> ATNet:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
