"""CNN object classifier over discriminator-view grids, with softmax confidence."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import MARKER_VALUE
from .errors import ConfigurationError, DataError, InputContractError
from .nn import Adam, Network, conv2d, dense, dropout, flatten, maxpool, relu, softmax, softmax_cross_entropy

INPUT_SHIFT = 0.5


def torso_specs(dropout_p: float = 0.5, hidden: int = 128):
    return [
        conv2d(16, 5, 2), relu(),
        conv2d(32, 3, 2), relu(),
        maxpool(2),
        dropout(dropout_p),
        flatten(),
        dense(hidden), relu(),
    ]


def discriminator_specs(num_classes: int, dropout_p: float = 0.5, hidden: int = 128):
    # a near-zero output layer starts every class at probability 1/K
    return torso_specs(dropout_p, hidden) + [dense(num_classes, in_features=hidden, gain=0.01)]


@dataclass(frozen=True)
class Prediction:
    label: int
    confidence: float
    distribution: np.ndarray = field(repr=False)

    @classmethod
    def from_distribution(cls, dist) -> "Prediction":
        d = np.asarray(dist, dtype=np.float64)
        label = int(np.argmax(d))  # first index wins ties
        return cls(label, float(d[label]), d)


@dataclass(frozen=True)
class DiscriminatorConfig:
    confidence_threshold: float = 0.98
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-3
    dropout: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.confidence_threshold <= 1.0:
            raise ConfigurationError("confidence_threshold must be in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class TrainStats:
    epoch_losses: list[float]
    accuracy: float


def should_terminate(pred: Prediction, threshold: float) -> bool:
    return pred.confidence > threshold


def _check_disc_view(images) -> None:
    if np.any(images == MARKER_VALUE):
        raise InputContractError("discriminator input contains the finger marker")


class Discriminator:
    """Owns the classifier network and its optimizer state."""

    def __init__(self, grid_shape, num_classes: int, config: DiscriminatorConfig = DiscriminatorConfig(),
                 seed=0, dtype=np.float32, network: Network | None = None):
        self.config = config
        self.num_classes = num_classes
        self.grid_shape = tuple(grid_shape)
        self.net = network or Network(discriminator_specs(num_classes, config.dropout), self.grid_shape,
                                      seed=seed, dtype=dtype)
        self.optimizer = Adam(self.net, lr=config.learning_rate)

    def logits(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=self.net.dtype) - self.net.dtype.type(INPUT_SHIFT)
        return np.asarray(self.net.predict(x), dtype=np.float64)

    def predict_proba(self, images, check=True) -> np.ndarray:
        images = np.asarray(images)
        if check:
            _check_disc_view(images)
        return softmax(self.logits(images))

    def predict(self, image) -> Prediction:
        return Prediction.from_distribution(self.predict_proba(np.asarray(image)[None])[0])

    def predict_grid(self, grid) -> Prediction:
        return Prediction.from_distribution(
            self.predict_proba(grid.view_for_discriminator(self.net.dtype)[None], check=False)[0])

    @property
    def confidence_threshold(self) -> float:
        return self.config.confidence_threshold

    def train_epochs(self, images_or_buffer, labels=None, epochs: int | None = None,
                     rng: np.random.Generator | None = None) -> TrainStats:
        """Shuffled mini-batch passes over a buffer (or explicit image/label arrays)."""
        if labels is None:
            buf = images_or_buffer
            n = len(buf)
            fetch = buf.batch
        else:
            imgs = np.asarray(images_or_buffer)
            labs = np.asarray(labels, dtype=np.int64)
            n = len(labs)

            def fetch(idx):
                return imgs[idx], labs[idx]
        if n == 0:
            raise DataError("cannot train the discriminator on an empty buffer")
        epochs = self.config.epochs if epochs is None else epochs
        rng = rng if rng is not None else np.random.default_rng(0)
        bs = self.config.batch_size
        shift = self.net.dtype.type(INPUT_SHIFT)
        losses = []
        correct = 0
        seen = 0
        for _ in range(epochs):
            order = rng.permutation(n)
            total = 0.0
            correct = seen = 0
            for start in range(0, n, bs):
                idx = np.sort(order[start:start + bs])
                x, y = fetch(idx)
                out, cache = self.net.forward(np.asarray(x, dtype=self.net.dtype) - shift, train=True)
                loss, probs, grad = softmax_cross_entropy(out.astype(np.float64), y)
                self.net.backward(cache, grad)
                self.optimizer.step()
                total += loss * len(y)
                correct += int((probs.argmax(axis=1) == y).sum())
                seen += len(y)
            losses.append(total / n)
        return TrainStats(losses, correct / seen if seen else float("nan"))

    def accuracy(self, images, labels, batch_size: int = 256) -> float:
        labels = np.asarray(labels)
        hits = 0
        for s in range(0, len(labels), batch_size):
            p = self.predict_proba(images[s:s + batch_size], check=False)
            hits += int((p.argmax(axis=1) == labels[s:s + batch_size]).sum())
        return hits / len(labels)
