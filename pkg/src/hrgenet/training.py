"""Classifier head, mini-batch training loop, and accuracy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .errors import ConfigError, EmptyInputError, NumericError
from .graph import HrgeModel, hrge_forward
from .layers import LinearLayer, linear_forward
from .optim import Adam, LrSchedule


class Classifier:
    """Single fully connected head from global descriptor to class logits."""

    def __init__(self, descriptor_length: int, num_classes: int, seed: int = 0):
        if num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {num_classes}")
        self.num_classes = num_classes
        self.head = LinearLayer(descriptor_length, num_classes,
                                np.random.default_rng(seed))

    def parameters(self):
        return self.head.parameters()

    def zero_grad(self):
        self.head.zero_grad()


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer schedule; defaults mirror the second-stage recipe
    (batch 72, 60 epochs, lr 1e-5 halved every 20 epochs, wd 1e-3)."""

    batch_size: int = 72
    epochs: int = 60
    learning_rate: float = 1e-5
    weight_decay: float = 1e-3
    betas: tuple = (0.9, 0.999)
    lr_decay_factor: float = 0.5
    lr_decay_period: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.learning_rate, self.lr_decay_factor,
                          self.lr_decay_period)


@dataclass
class TrainLog:
    """Per-step and per-epoch records of a training run."""

    records: list = field(default_factory=list)

    def add(self, **fields):
        self.records.append(dict(fields))

    def epoch_records(self):
        return [r for r in self.records if "acc" in r]

    def to_lines(self):
        lines = []
        for r in self.records:
            lines.append(" ".join(f"{k}={r[k]:.10g}" if isinstance(r[k], float)
                                  else f"{k}={r[k]}" for k in r))
        return lines

    def save(self, path):
        with open(path, "w") as f:
            for line in self.to_lines():
                f.write(line + "\n")

    @staticmethod
    def parse(text: str) -> "TrainLog":
        log = TrainLog()
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            rec = {}
            for token in line.split():
                key, _, value = token.partition("=")
                rec[key] = int(value) if key in ("epoch", "step") else float(value)
            log.records.append(rec)
        return log


def _descriptor_batch(model, views_list):
    descs = [hrge_forward(model, v).concat for v in views_list]
    return ag.stack_rows(descs)


def predict(model: HrgeModel, classifier: Classifier, views):
    """Logits and argmax label (first-wins tie-break) for one shape."""
    batch = _descriptor_batch(model, [views])
    logits = linear_forward(classifier.head, batch).data[0]
    return logits, int(np.argmax(logits))


def predict_batch(model, classifier, views_list):
    batch = _descriptor_batch(model, views_list)
    logits = linear_forward(classifier.head, batch).data
    return logits, logits.argmax(axis=1)


def train(model: HrgeModel, classifier: Classifier, dataset,
          cfg: TrainConfig) -> TrainLog:
    """Shuffled mini-batch cross-entropy training with Adam.

    The last partial batch is used, not dropped.  Raises NumericError
    with epoch/batch diagnostics if the loss goes non-finite.
    """
    records = list(dataset.records)
    if not records:
        raise EmptyInputError("cannot train on an empty dataset")
    for rec in records:
        if not 0 <= rec.coarse_label < classifier.num_classes:
            raise ConfigError(
                f"record {rec.id!r} has label {rec.coarse_label} outside "
                f"[0, {classifier.num_classes})"
            )
    params = model.parameters() + classifier.parameters()
    opt = Adam(params, lr=cfg.learning_rate, betas=cfg.betas,
               weight_decay=cfg.weight_decay)
    schedule = cfg.schedule
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    n = len(records)
    for epoch in range(cfg.epochs):
        opt.lr = schedule.lr_at_epoch(epoch)
        order = rng.permutation(n)
        losses, correct = [], 0
        step = 0
        for start in range(0, n, cfg.batch_size):
            batch = [records[k] for k in order[start:start + cfg.batch_size]]
            labels = np.array([r.coarse_label for r in batch])
            opt.zero_grad()
            logits = linear_forward(
                classifier.head,
                _descriptor_batch(model, [r.views for r in batch]))
            loss = ag.softmax_cross_entropy(logits, labels)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise NumericError(
                    f"non-finite loss {loss_val} at epoch {epoch} "
                    f"batch {step}"
                )
            loss.backward()
            opt.step()
            correct += int((logits.data.argmax(axis=1) == labels).sum())
            losses.append(loss_val)
            log.add(epoch=epoch, step=step, loss=loss_val, lr=opt.lr)
            step += 1
        log.add(epoch=epoch, step=step, loss=float(np.mean(losses)),
                lr=opt.lr, acc=correct / n)
    return log


def evaluate_accuracy(model: HrgeModel, classifier: Classifier, dataset):
    """(per_instance, per_class) accuracy; empty classes are excluded
    from the per-class mean."""
    records = list(dataset.records)
    if not records:
        raise EmptyInputError("cannot evaluate an empty dataset")
    labels = np.array([r.coarse_label for r in records])
    _, preds = predict_batch(model, classifier, [r.views for r in records])
    hits = preds == labels
    per_instance = float(hits.mean())
    class_accs = [float(hits[labels == c].mean())
                  for c in np.unique(labels)]
    return per_instance, float(np.mean(class_accs))
