"""Joint training of both streams: SGD with momentum, decoupled weight
decay, a step learning-rate schedule, softmax cross-entropy, and
apex-frame-only augmentation. Deterministic given the config seed."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, log_softmax
from .dataset import CLASS_ORDER, ClipSet
from .model import ATNet, ModelConfig, encode_checkpoint
from .pipeline import TrainingExample, extract_examples
from .preprocess import AugmentParams, augment

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "NumericalError",
    "SGD",
    "lr_schedule",
    "cross_entropy",
    "cross_entropy_from_logits",
    "train",
]

CLASS_INDEX = {cls: i for i, cls in enumerate(CLASS_ORDER)}


class NumericalError(ArithmeticError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 0.01
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 10
    epochs: int = 50
    momentum: float = 0.9
    weight_decay: float = 5e-6
    batch_size: int = 2
    seed: int = 0
    augment: AugmentParams = field(default_factory=AugmentParams)

    def __post_init__(self):
        if self.initial_lr <= 0 or self.lr_decay_factor <= 0 or self.batch_size < 1:
            raise ValueError("rates and batch size must be positive")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class TrainHistory:
    """One row per epoch plus a checksum of the final weights."""

    epochs: list[dict] = field(default_factory=list)
    params_checksum: str = ""

    def to_csv(self) -> str:
        lines = ["epoch,lr,loss,acc"]
        lines += [f"{e['epoch']},{e['lr']:.10g},{e['loss']:.10g},{e['acc']:.10g}"
                  for e in self.epochs]
        return "\n".join(lines) + "\n"


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Step schedule: the rate shrinks by the decay factor every
    ``lr_decay_every`` epochs."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    return config.initial_lr * config.lr_decay_factor ** (epoch // config.lr_decay_every)


def cross_entropy(probabilities: np.ndarray, label) -> float:
    """-log p[label] for one already-normalized probability vector."""
    probabilities = np.asarray(probabilities)
    if not ((probabilities > 0).all() and abs(probabilities.sum() - 1.0) < 1e-9):
        raise ValueError("probabilities must be positive and sum to 1")
    index = CLASS_INDEX[label] if label in CLASS_INDEX else int(label)
    return float(-np.log(probabilities[index]))


def cross_entropy_from_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over a batch, in the stable
    log-sum-exp form; gradient w.r.t. logits is (p - onehot)/N."""
    log_probs = log_softmax(logits, axis=-1)
    n = logits.data.shape[0]
    picked = log_probs[np.arange(n), labels]
    return -picked.mean()


class SGD:
    """Momentum SGD with decoupled weight decay: after the momentum step,
    weights are scaled by exactly (1 - lr * weight_decay)."""

    def __init__(self, params: list[tuple[str, Tensor]], momentum: float = 0.9,
                 weight_decay: float = 0.0):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(t.data) for name, t in params}

    def step(self, lr: float) -> None:
        decay = 1.0 - lr * self.weight_decay
        for name, p in self.params:
            grad = p.grad if p.grad is not None else 0.0
            buf = self.velocity[name]
            buf *= self.momentum
            buf += grad
            p.data -= lr * buf
            if self.weight_decay:
                p.data *= decay
            p.grad = None


def _example_arrays(examples: list[TrainingExample]):
    apex = np.stack([e.apex for e in examples])
    features = np.stack([e.feature for e in examples])
    labels = np.array([CLASS_INDEX[e.label] for e in examples])
    return apex, features, labels


def train(data, config: TrainConfig, model_config: ModelConfig,
          flow_params=None) -> tuple[ATNet, TrainHistory]:
    """Train a fresh model on a ClipSet or a pre-extracted example list.

    Augmentation touches only the apex image fed to the spatial stream;
    the flow features are computed once and reused. Runs are bit-
    reproducible for a fixed config.
    """
    if isinstance(data, ClipSet):
        examples = extract_examples(data, size=model_config.image_size,
                                    half_width=model_config.time_steps // 2,
                                    flow_params=flow_params)
    else:
        examples = list(data)
    if not examples:
        raise ValueError("training set is empty")

    init_rng = np.random.default_rng([config.seed, 0])
    shuffle_rng = np.random.default_rng([config.seed, 1])
    augment_rng = np.random.default_rng([config.seed, 2])
    dropout_rng = np.random.default_rng([config.seed, 3])

    model = ATNet(model_config, rng=init_rng)
    optimizer = SGD(model.params(), momentum=config.momentum, weight_decay=config.weight_decay)
    aug_params = config.augment.scaled_for(model_config.image_size)
    uses_spatial = model_config.stream in ("fusion", "spatial")
    uses_temporal = model_config.stream in ("fusion", "temporal")

    apex_all, feat_all, label_all = _example_arrays(examples)
    history = TrainHistory()
    n = len(examples)
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config)
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            feat_batch = Tensor(feat_all[idx]) if uses_temporal else None
            apex_batch = None
            if uses_spatial:
                apex_batch = Tensor(np.stack([augment(apex_all[i], aug_params, augment_rng)
                                              for i in idx]))
            labels = label_all[idx]
            logits = model.forward(apex_batch, feat_batch, training=True, rng=dropout_rng)
            loss = cross_entropy_from_logits(logits, labels)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericalError(
                    f"non-finite loss {value} at epoch {epoch}, batch starting {start} "
                    f"(lr={lr:g}); inspect feature scaling or lower the learning rate")
            loss.backward()
            optimizer.step(lr)
            epoch_loss += value * len(idx)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        history.epochs.append({"epoch": epoch, "lr": lr,
                               "loss": epoch_loss / n, "acc": correct / n})
    history.params_checksum = hashlib.sha256(encode_checkpoint(model)).hexdigest()
    return model, history
