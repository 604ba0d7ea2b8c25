"""Additive-loss training loop: SGD with momentum and weight decay.

The per-example loss is (len1 - O(s2) - O(s3))^2 + lambda * ||W||^2 over
the weight tensors; a batch optimizes the arithmetic mean of its examples'
losses, which keeps the learning rate's meaning independent of batch size
and applies the shared penalty term exactly once per step. Weight decay
runs inside the optimizer on weight tensors only, independently of the
in-loss lambda penalty; either can be zeroed in the config.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import models
from .autodiff import ParamStore, Tape, Tensor
from .datagen import DatasetSplits, ExampleTriple
from .models import ModelKind

__all__ = [
    "TrainConfig",
    "SgdState",
    "TrainLog",
    "EpochRecord",
    "DivergenceError",
    "triple_loss",
    "batch_loss",
    "sgd_step",
    "train",
    "train_arrays",
]


class DivergenceError(RuntimeError):
    """Raised when the loss stops being finite; training cannot continue."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    model: ModelKind = ModelKind.CNN
    batch_size: int = 200
    epochs: int = 100
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    reg_lambda: float = 0.01
    seed: int = 0
    conv_channels: int = 16
    center_output: bool = True

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if self.batch_size < 1 or self.epochs < 1 or self.conv_channels < 1:
            raise ValueError("batch_size, epochs, conv_channels must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0 or self.reg_lambda < 0:
            raise ValueError("weight_decay and reg_lambda must be non-negative")

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "reg_lambda": self.reg_lambda,
            "seed": self.seed,
            "conv_channels": self.conv_channels,
            "center_output": self.center_output,
        }


class SgdState:
    """Per-parameter velocity tensors, zero-initialized."""

    def __init__(self, params: ParamStore):
        self.velocity = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, params: ParamStore, config: TrainConfig) -> None:
        sgd_step(params, self, config)


def sgd_step(params: ParamStore, state: SgdState, config: TrainConfig) -> None:
    """v <- mu v + (g + wd * theta); theta <- theta - lr * v.

    Weight decay touches weight tensors only, never biases.
    """
    for name, t in params.items():
        g = t.grad
        if g is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        if g.shape != t.data.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if config.weight_decay and not params.is_bias(name):
            g = g + config.weight_decay * t.data
        v = state.velocity[name]
        v *= config.momentum
        v += g
        t.data -= config.learning_rate * v


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_loss: float
    seconds: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epoch indices must be strictly increasing")
        self.records.append(record)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,test_loss,seconds\n")
            for r in self.records:
                fh.write(f"{r.epoch},{r.train_loss!r},{r.test_loss!r},{r.seconds:.3f}\n")

    def final(self) -> EpochRecord:
        return self.records[-1]


def triple_loss(
    kind: ModelKind | str,
    params: ParamStore,
    triple: ExampleTriple,
    reg_lambda: float,
) -> Tensor:
    """Loss of one example: squared additivity residual plus L2 penalty."""
    o2 = models.forward(kind, params, triple.s2)
    o3 = models.forward(kind, params, triple.s3)
    resid = Tensor(np.float64(triple.len1)) - o2 - o3
    loss = ad.square(resid)
    if reg_lambda:
        loss = loss + float(reg_lambda) * ad.l2_penalty(params)
    return loss


def batch_loss(
    kind: ModelKind | str,
    params: ParamStore,
    s2: np.ndarray,
    s3: np.ndarray,
    len1: np.ndarray,
    reg_lambda: float,
) -> Tensor:
    """Mean example loss over a batch; the penalty enters once."""
    o2 = models.forward(kind, params, s2)
    o3 = models.forward(kind, params, s3)
    resid = Tensor(len1) - o2 - o3
    loss = ad.mean_all(ad.square(resid))
    if reg_lambda:
        loss = loss + float(reg_lambda) * ad.l2_penalty(params)
    return loss


def _stack_triples(triples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s2 = np.stack([t.s2 for t in triples])
    s3 = np.stack([t.s3 for t in triples])
    len1 = np.array([t.len1 for t in triples])
    return s2, s3, len1


def train(splits: DatasetSplits, config: TrainConfig, progress=None):
    """Full training per config; returns (params, log).

    Deterministic given the dataset and config: parameter init draws from
    ``config.seed`` and the per-epoch shuffles from one stream keyed by
    ``(config.seed, 0)``.
    """
    s2, s3, len1 = _stack_triples(splits.train)
    test = _stack_triples(splits.test) if splits.test else None
    return train_arrays(s2, s3, len1, config, test=test, progress=progress)


def train_arrays(
    s2: np.ndarray,
    s3: np.ndarray,
    len1: np.ndarray,
    config: TrainConfig,
    test: tuple | None = None,
    progress=None,
):
    """Train on pre-stacked arrays: s2, s3 of shape (k, 2, n), len1 of (k,)."""
    n = len(len1)
    if n == 0:
        raise ValueError("empty training set")
    if s2.shape != s3.shape or s2.shape[0] != n:
        raise ValueError(f"inconsistent training arrays: {s2.shape}, {s3.shape}, {len1.shape}")

    params = models.init_params(
        config.model, config.seed, n_points=s2.shape[-1], conv_channels=config.conv_channels
    )
    if config.center_output:
        # Start the output bias at half the mean target so the two summed
        # sub-curve predictions begin centered; without this the first
        # momentum steps overshoot and the loss blows up at the default
        # learning rate.
        params["fc2.bias"].data[:] = 0.5 * float(np.mean(len1))
    state = SgdState(params)
    shuffle_rng = np.random.default_rng((config.seed % 2**64, 0))
    log = TrainLog()

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for batch_index, lo in enumerate(range(0, n, config.batch_size)):
            idx = perm[lo : lo + config.batch_size]
            params.zero_grad()
            loss = batch_loss(
                config.model, params, s2[idx], s3[idx], len1[idx], config.reg_lambda
            )
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(epoch, batch_index, value)
            tape = Tape(loss)
            tape.backward()
            tape.clear()
            sgd_step(params, state, config)
            epoch_loss += value * len(idx)
        train_loss = epoch_loss / n
        test_loss = (
            _mean_loss(config.model, params, *test, config.reg_lambda)
            if test is not None
            else float("nan")
        )
        record = EpochRecord(epoch, train_loss, test_loss, time.perf_counter() - t0)
        log.append(record)
        if progress is not None:
            progress(record)
    return params, log


def _mean_loss(kind, params, s2, s3, len1, reg_lambda, chunk: int = 2048) -> float:
    """Mean example loss over a fixed set, without building a graph."""
    with ad.no_grad():
        total = 0.0
        for lo in range(0, len(len1), chunk):
            hi = min(lo + chunk, len(len1))
            o2 = models.forward(kind, params, s2[lo:hi]).data
            o3 = models.forward(kind, params, s3[lo:hi]).data
            total += float(((len1[lo:hi] - o2 - o3) ** 2).sum())
        mean = total / len(len1)
        if reg_lambda:
            mean += float(reg_lambda) * ad.l2_penalty(params).item()
    return mean
