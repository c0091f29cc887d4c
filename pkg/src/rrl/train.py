"""Training: Gradient Grafting and a straight-through baseline, both with Adam."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import EncodedDataset, macro_f1
from .logic import LogicalLayerParams
from .model import RRLModel, backward, forward, loss, softmax

log = logging.getLogger(__name__)

TRAINERS = ("grafting", "ste")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 5e-3
    epochs: int = 400
    batch_size: int = 32
    lr_decay: float = 0.75
    decay_every: int = 100
    lam: float | None = None  # None: use the model's configured lam
    seed: int = 0
    trainer: str = "grafting"
    log_every: int = 1
    valid_frac: float = 0.0

    def validate(self) -> None:
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.decay_every < 1 or self.log_every < 1:
            raise ValueError("batch_size, decay_every, log_every must be >= 1 and epochs >= 0")
        if self.trainer not in TRAINERS:
            raise ValueError(f"trainer must be one of {TRAINERS}")
        if not 0.0 <= self.valid_frac < 1.0:
            raise ValueError("valid_frac must be in [0, 1)")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.decay_every)


class Adam:
    """Adam with bias correction; moments are keyed by parameter name."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _add_l2(model: RRLModel, grads: dict[str, np.ndarray], lam: float) -> None:
    if lam:
        for i, layer in enumerate(model.layers):
            grads[f"layer{i}.W0"] = grads[f"layer{i}.W0"] + 2.0 * lam * layer.W0
            grads[f"layer{i}.W1"] = grads[f"layer{i}.W1"] + 2.0 * lam * layer.W1


def _apply(model: RRLModel, grads: dict[str, np.ndarray], adam: Adam, lr: float) -> None:
    adam.step(model.parameters(), grads, lr)
    for layer in model.layers:
        layer.clamp_()


def grafted_gradients(model: RRLModel, C, B, Y, lam: float = 0.0) -> tuple[dict[str, np.ndarray], float]:
    """Loss gradient taken at the discrete logits, backpropagated through the continuous model."""
    Y = np.asarray(Y, dtype=np.float64)
    trace = forward(model, C, B)
    g = (softmax(trace.Y_disc) - Y) / Y.shape[0]
    grads = backward(model, trace, g)
    _add_l2(model, grads, lam)
    return grads, loss(trace.Y_disc, Y, model, lam)


def grafted_step(model: RRLModel, C, B, Y, lr: float, lam: float, adam: Adam) -> float:
    """One Gradient Grafting update; returns the discrete-model batch loss before the update."""
    grads, batch_loss = grafted_gradients(model, C, B, Y, lam)
    _apply(model, grads, adam, lr)
    return batch_loss


def binarized_copy(model: RRLModel) -> RRLModel:
    """The model with logical weights replaced by q(W) as floats (shares the linear head)."""
    layers = [LogicalLayerParams(layer.W0 > 0.5, layer.W1 > 0.5, layer.eps, layer.use_derivative_trick)
              for layer in model.layers]
    for layer in layers:
        layer.W0, layer.W1 = layer.W0.astype(np.float64), layer.W1.astype(np.float64)
    return dataclasses.replace(model, layers=layers)


def ste_gradients(model: RRLModel, C, B, Y, lam: float = 0.0) -> tuple[dict[str, np.ndarray], float]:
    """Straight-through gradients: everything is evaluated at q(W) and copied onto W."""
    Y = np.asarray(Y, dtype=np.float64)
    at_binary = binarized_copy(model)
    trace = forward(at_binary, C, B)
    g = (softmax(trace.Y_disc) - Y) / Y.shape[0]
    grads = backward(at_binary, trace, g)
    _add_l2(model, grads, lam)
    return grads, loss(trace.Y_disc, Y, model, lam)


def ste_step(model: RRLModel, C, B, Y, lr: float, lam: float, adam: Adam) -> float:
    grads, batch_loss = ste_gradients(model, C, B, Y, lam)
    _apply(model, grads, adam, lr)
    return batch_loss


@dataclass
class EpochRecord:
    epoch: int
    step: int
    loss_discrete: float
    f1_train: float
    f1_valid: float
    lr: float
    wall: float = field(default=0.0, compare=False)


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def losses(self) -> dict[int, float]:
        return {r.epoch: r.loss_discrete for r in self.records}

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss_discrete", "f1_train", "f1_valid", "lr"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.loss_discrete), repr(r.f1_train),
                            "" if math.isnan(r.f1_valid) else repr(r.f1_valid), repr(r.lr)])


def evaluate_discrete(model: RRLModel, C, B, Y) -> tuple[float, float]:
    """(cross-entropy, macro F1) of the discrete model."""
    trace = forward(model, C, B, continuous=False)
    y = np.asarray(Y).argmax(axis=1)
    return loss(trace.Y_disc, Y), macro_f1(trace.Y_disc.argmax(axis=1), y, model.n_classes)


def split_validation(idx: np.ndarray, frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if frac <= 0:
        return idx, idx[:0]
    rng = np.random.default_rng([seed, 2**31 - 1])
    perm = idx[rng.permutation(len(idx))]
    n_valid = max(1, int(round(frac * len(idx))))
    return np.sort(perm[n_valid:]), np.sort(perm[:n_valid])


def fit(model: RRLModel, ds: EncodedDataset, config: TrainConfig,
        train_idx: np.ndarray | None = None) -> tuple[RRLModel, TrainLog]:
    """Train `model` in place on `ds[train_idx]`; returns the model and its per-epoch log."""
    config.validate()
    idx = np.arange(len(ds)) if train_idx is None else np.asarray(train_idx, dtype=np.int64)
    tr, va = split_validation(idx, config.valid_frac, config.seed)
    if len(tr) == 0:
        raise TrainingError("empty training split")
    C, B = ds.C[tr], ds.B[tr]
    Y = ds.Y[tr].astype(np.float64)
    lam = model.config.lam if config.lam is None else config.lam
    step_fn = grafted_step if config.trainer == "grafting" else ste_step
    adam, tlog, steps, t0 = Adam(), TrainLog(), 0, time.perf_counter()
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = np.random.default_rng([config.seed, epoch]).permutation(len(tr))
        for start in range(0, len(tr), config.batch_size):
            b = order[start:start + config.batch_size]
            try:
                step_fn(model, C[b], B[b], Y[b], lr, lam, adam)
            except FloatingPointError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
            steps += 1
        if (epoch + 1) % config.log_every == 0 or epoch + 1 == config.epochs:
            l_tr, f_tr = evaluate_discrete(model, C, B, Y)
            f_va = evaluate_discrete(model, ds.C[va], ds.B[va], ds.Y[va])[1] if len(va) else math.nan
            tlog.records.append(EpochRecord(epoch + 1, steps, l_tr, f_tr, f_va, lr,
                                            time.perf_counter() - t0))
            log.debug("epoch %d loss %.5f f1 %.4f", epoch + 1, l_tr, f_tr)
    return model, tlog

