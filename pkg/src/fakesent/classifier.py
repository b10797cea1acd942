"""Real/fake classification head and the SGD training loop.

The head is a two-hidden-layer MLP with tanh activations and a 2-way
softmax output; class 1 is REAL, class 0 is FAKE. Training shuffles the
train split each epoch with a seeded generator, runs minibatch SGD on the
fused softmax cross-entropy, validates after every epoch, halves the
learning rate whenever validation accuracy fails to improve, and keeps the
checkpoint of the best epoch (ties resolve to the earliest).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import checkpoint as ckpt
from . import numcore as nc
from .corpus import Sentence
from .encoder import SentenceEncoder
from .errors import (
    DivergedTraining,
    EmptyDataset,
    NonFiniteValue,
    ShapeMismatch,
    SingleClassData,
)
from .fakegen import REAL, LabeledExample


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 15
    learning_rate: float = 0.1
    lr_decay_factor: float = 0.5
    seed: int = 0
    precision: str = "float32"
    freeze_embeddings: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must be in (0, 1]")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision {self.precision!r}")


class MlpHead:
    """hidden1 -> tanh -> hidden2 -> tanh -> 2-way softmax logits."""

    def __init__(self, w1, b1, w2, b2, w3, b3):
        self.w1, self.b1 = w1, b1
        self.w2, self.b2 = w2, b2
        self.w3, self.b3 = w3, b3

    @classmethod
    def create(cls, in_dim: int, hidden1: int, hidden2: int, rng: np.random.Generator, dtype):
        if hidden1 < 1 or hidden2 < 1:
            raise ValueError("hidden widths must be >= 1")

        def linear(name, n_in, n_out):
            k = math.sqrt(6.0 / (n_in + n_out))  # Glorot uniform
            w = nc.Parameter(f"head.w{name}", rng.uniform(-k, k, size=(n_in, n_out)).astype(dtype))
            b = nc.Parameter(f"head.b{name}", np.zeros(n_out, dtype=dtype))
            return w, b

        w1, b1 = linear(1, in_dim, hidden1)
        w2, b2 = linear(2, hidden1, hidden2)
        w3, b3 = linear(3, hidden2, 2)
        return cls(w1, b1, w2, b2, w3, b3)

    @property
    def in_dim(self) -> int:
        return self.w1.value.shape[0]

    @property
    def hidden_widths(self) -> tuple[int, int]:
        return self.w1.value.shape[1], self.w2.value.shape[1]

    def parameters(self) -> list[nc.Parameter]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def forward(self, tape: nc.Tape | None, z: nc.Tensor) -> nc.Tensor:
        def leaf(p):
            return tape.leaf(p) if tape is not None else nc.Tensor(p.value)

        h = nc.tanh(tape, nc.add(tape, nc.matmul(tape, z, leaf(self.w1)), leaf(self.b1)))
        h = nc.tanh(tape, nc.add(tape, nc.matmul(tape, h, leaf(self.w2)), leaf(self.b2)))
        return nc.add(tape, nc.matmul(tape, h, leaf(self.w3)), leaf(self.b3))


def classify(z: np.ndarray, head: MlpHead) -> float:
    """Probability that the encoding belongs to a real sentence."""
    z = np.asarray(z)
    if z.ndim != 1 or z.shape[0] != head.in_dim:
        raise ShapeMismatch(f"encoding shape {z.shape}, head expects ({head.in_dim},)")
    logits = head.forward(None, nc.Tensor(z[None, :]))
    return float(nc.softmax(logits.data)[0, REAL])


class DetectorModel:
    """Encoder plus classification head; the trainable unit."""

    def __init__(self, encoder: SentenceEncoder, head: MlpHead):
        if head.in_dim != encoder.out_dim:
            raise ShapeMismatch(
                f"head expects {head.in_dim} features, encoder produces {encoder.out_dim}"
            )
        self.encoder = encoder
        self.head = head

    @classmethod
    def create(cls, encoder: SentenceEncoder, hidden1: int, hidden2: int, rng) -> "DetectorModel":
        head = MlpHead.create(encoder.out_dim, hidden1, hidden2, rng, encoder.dtype)
        return cls(encoder, head)

    def all_parameters(self) -> list[nc.Parameter]:
        return self.encoder.parameters() + self.head.parameters()

    def trainable_parameters(self, freeze_embeddings: bool = False) -> list[nc.Parameter]:
        return self.encoder.parameters(include_embedding=not freeze_embeddings) + self.head.parameters()

    def batch_loss(
        self, tape: nc.Tape | None, idx: np.ndarray, lengths: np.ndarray, labels: np.ndarray
    ) -> tuple[nc.Tensor, np.ndarray]:
        z, _ = self.encoder.forward_batch(tape, idx, lengths)
        logits = self.head.forward(tape, z)
        return nc.softmax_cross_entropy(tape, logits, labels)

    def predict_proba(self, sentences: Sequence[Sentence], batch_size: int = 64) -> np.ndarray:
        """p(REAL) per sentence, computed in padded chunks."""
        out = np.empty(len(sentences), dtype=np.float64)
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            idx, lengths = self.encoder.prepare_batch(chunk)
            z, _ = self.encoder.forward_batch(None, idx, lengths)
            logits = self.head.forward(None, z)
            out[start : start + len(chunk)] = nc.softmax(logits.data)[:, REAL]
        return out

    def predict(self, sentences: Sequence[Sentence], batch_size: int = 64) -> np.ndarray:
        return (self.predict_proba(sentences, batch_size) >= 0.5).astype(np.int64)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    valid_accuracy: float
    learning_rate: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "train_loss": self.train_loss,
                "train_accuracy": self.train_accuracy,
                "valid_accuracy": self.valid_accuracy,
                "learning_rate": self.learning_rate,
            },
            sort_keys=True,
        )


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_accuracy: float = 0.0
    checkpoint_path: str | None = None


def _accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    return float((predictions == labels).mean())


def train(
    model: DetectorModel,
    train_data: Sequence[LabeledExample],
    valid_data: Sequence[LabeledExample],
    cfg: TrainConfig,
    checkpoint_path,
    metrics_path=None,
) -> TrainReport:
    """Minibatch SGD over the labeled dataset; returns the per-epoch report.

    Fully reproducible: the same (data, config, seed, initial model) gives
    a bit-identical checkpoint and metrics file.
    """
    if len(train_data) == 0 or len(valid_data) == 0:
        raise EmptyDataset("both train and valid splits must be non-empty")
    train_labels = np.array([ex.label for ex in train_data], dtype=np.int64)
    if len(set(train_labels.tolist())) < 2:
        raise SingleClassData("train split contains a single class")
    valid_sentences = [ex.sentence for ex in valid_data]
    valid_labels = np.array([ex.label for ex in valid_data], dtype=np.int64)

    params = model.trainable_parameters(cfg.freeze_embeddings)
    encoder = model.encoder
    prepared = [
        (np.array(encoder.vocab.indices(ex.sentence.tokens), dtype=np.int64), ex.label)
        for ex in train_data
    ]
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate
    report = TrainReport()
    metrics_file = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(prepared))
            loss_sum = 0.0
            correct = 0
            for start in range(0, len(order), cfg.batch_size):
                batch_ids = order[start : start + cfg.batch_size]
                rows = [prepared[i] for i in batch_ids]
                lengths = np.array([len(r[0]) for r in rows], dtype=np.int64)
                idx = np.zeros((len(rows), int(lengths.max())), dtype=np.int64)
                for r, (ids, _) in enumerate(rows):
                    idx[r, : len(ids)] = ids
                labels = np.array([r[1] for r in rows], dtype=np.int64)
                try:
                    tape = nc.Tape()
                    loss, probs = model.batch_loss(tape, idx, lengths, labels)
                    loss_val = loss.data.item()
                    if not np.isfinite(loss_val):
                        raise DivergedTraining(f"non-finite loss at epoch {epoch}")
                    nc.backward(tape, loss)
                    nc.sgd_step(params, lr)
                except NonFiniteValue as e:
                    raise DivergedTraining(f"epoch {epoch}: {e}") from e
                loss_sum += loss_val * len(rows)
                correct += int(((probs[:, REAL] >= 0.5).astype(np.int64) == labels).sum())
            valid_acc = _accuracy(model.predict(valid_sentences, cfg.batch_size), valid_labels)
            stats = EpochStats(
                epoch=epoch,
                train_loss=loss_sum / len(prepared),
                train_accuracy=correct / len(prepared),
                valid_accuracy=valid_acc,
                learning_rate=lr,
            )
            report.epochs.append(stats)
            if metrics_file:
                metrics_file.write(stats.to_json() + "\n")
            if valid_acc > report.best_valid_accuracy or report.best_epoch == 0:
                report.best_epoch = epoch
                report.best_valid_accuracy = valid_acc
                if checkpoint_path is not None:
                    ckpt.save_model(checkpoint_path, model)
                    report.checkpoint_path = str(checkpoint_path)
            else:
                lr *= cfg.lr_decay_factor
    finally:
        if metrics_file:
            metrics_file.close()
    return report


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    support: int


@dataclass
class EvalMetrics:
    accuracy: float
    per_class: dict[str, ClassMetrics]
    count: int


def evaluate(model: DetectorModel, data: Sequence[LabeledExample], batch_size: int = 64) -> EvalMetrics:
    """Accuracy and per-class precision/recall in one pass."""
    if len(data) == 0:
        raise EmptyDataset("no examples to evaluate")
    labels = np.array([ex.label for ex in data], dtype=np.int64)
    preds = model.predict([ex.sentence for ex in data], batch_size)
    per_class = {}
    for cls, name in ((1, "real"), (0, "fake")):
        tp = int(((preds == cls) & (labels == cls)).sum())
        fp = int(((preds == cls) & (labels != cls)).sum())
        fn = int(((preds != cls) & (labels == cls)).sum())
        per_class[name] = ClassMetrics(
            precision=tp / (tp + fp) if tp + fp else 0.0,
            recall=tp / (tp + fn) if tp + fn else 0.0,
            support=int((labels == cls).sum()),
        )
    return EvalMetrics(accuracy=_accuracy(preds, labels), per_class=per_class, count=len(data))
