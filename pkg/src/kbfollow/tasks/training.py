"""Minibatch training and Hits@k evaluation shared by all models."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tape, adam_step, backward, sgd_step
from ..errors import ConfigError
from ..kb import topk_indices

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 10
    lr: float = 3e-3
    optimizer: str = "adam"
    clip: float | None = 5.0
    seed: int = 0
    eval_batch_size: int = 200
    log_path: str | None = None

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("epochs and batch sizes must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        return self

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d).validate()


def hits_at(probs: np.ndarray, answers, ks=(1, 10)):
    """Per-row hit indicators for each k, ties broken by ascending entity index."""
    top = topk_indices(probs, max(ks))
    return {k: np.array([bool(set(top[i, :k].tolist()) & answers[i]) for i in range(len(answers))]) for k in ks}


def _batches(model, examples, size, batch_kwargs):
    for s in range(0, len(examples), size):
        yield model.make_batch(examples[s:s + size], **batch_kwargs)


def evaluate(model, examples, batch_size=200, batch_kwargs=None, per_example=False):
    """Mean cross-entropy, Hits@1 and Hits@10 over ``examples``."""
    batch_kwargs = batch_kwargs or {}
    losses, h1, h10 = [], [], []
    for batch in _batches(model, examples, batch_size, batch_kwargs):
        tape = Tape()
        loss, probs = model.loss(tape, batch)
        losses.append(float(loss.value) * len(batch))
        hits = hits_at(probs, batch.answers)
        h1.append(hits[1])
        h10.append(hits[10])
    h1, h10 = np.concatenate(h1), np.concatenate(h10)
    out = {"loss": sum(losses) / len(examples), "hits1": float(h1.mean()), "hits10": float(h10.mean())}
    if per_example:
        out["hits1_each"] = h1
    return out


def train(model, examples, config: TrainConfig, eval_examples=None, batch_kwargs=None, on_epoch=None):
    """Fit ``model`` with softmax cross-entropy; returns one metrics dict per epoch.

    Metrics are also appended as JSON lines to ``config.log_path``.
    Hits are measured on ``eval_examples`` (training data if omitted).
    """
    config.validate()
    batch_kwargs = batch_kwargs or {}
    rng = np.random.default_rng(config.seed)
    history = []
    sink = open(config.log_path, "a", encoding="utf-8") if config.log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(examples))
            total = 0.0
            for s in range(0, len(examples), config.batch_size):
                batch = model.make_batch([examples[i] for i in order[s:s + config.batch_size]], **batch_kwargs)
                tape = Tape()
                loss, _ = model.loss(tape, batch)
                model.params.zero_grad()
                backward(tape, loss, model.params)
                if config.optimizer == "adam":
                    adam_step(model.params, config.lr, clip=config.clip)
                else:
                    sgd_step(model.params, config.lr)
                total += float(loss.value) * len(batch)
            metrics = evaluate(model, eval_examples if eval_examples is not None else examples,
                               config.eval_batch_size, batch_kwargs)
            record = {"epoch": epoch, "loss": total / len(examples),
                      "hits1": metrics["hits1"], "hits10": metrics["hits10"]}
            history.append(record)
            log.info("epoch %d loss %.4f hits1 %.4f hits10 %.4f (%.1fs)", epoch, record["loss"],
                     record["hits1"], record["hits10"], time.perf_counter() - t0)
            if sink:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
            if on_epoch is not None:
                on_epoch(record)
    finally:
        if sink:
            sink.close()
    return history


def config_dict(config: TrainConfig):
    return asdict(config)
