"""Loss, optimisation loop and validation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from wavesep import ops
from wavesep.checkpoint import save_checkpoint
from wavesep.dataset import SegmentSampler, TrackSet
from wavesep.model import ModelGraph, forward
from wavesep.optim import AdamState, adam_step
from wavesep.tensor import DimensionError, Tape, Tensor, backward, no_tape, precision

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


class BatchSource(Protocol):
    def batch(self, step: int, size: int) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 1
    steps_per_epoch: int = 2000
    seed: int = 0
    precision: str = "float32"
    micro_batch: int = 1  # segments per forward/backward pass; 0 = whole batch
    val_segments: int = 16
    checkpoint_path: str | None = None
    checkpoint_interval: int = 1  # epochs
    augment: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0 or self.steps_per_epoch < 1:
            raise ValueError("epochs must be >= 0 and steps_per_epoch >= 1")


@dataclass
class TrainResult:
    model: ModelGraph
    optimizer: AdamState
    step: int
    history: list[dict] = field(default_factory=list)


def separation_loss(preds: Tensor, targets: Tensor) -> Tensor:
    """Mean over sources of per-source MSE, the residual source included.

    Every source block has the same size, so this is the MSE over the whole
    ``[..., K, C, T]`` tensor; with a batch axis it is also the mean of the
    per-segment losses.
    """
    if preds.shape != targets.shape:
        raise DimensionError(f"preds {preds.shape} and targets {targets.shape} differ")
    return ops.mse(preds, targets)


class FixedBatch:
    """Serves the same (mixture, sources) pair at every step."""

    def __init__(self, mixture: np.ndarray, sources: np.ndarray):
        self.mixture = mixture[None] if mixture.ndim == 2 else mixture
        self.sources = sources[None] if sources.ndim == 3 else sources

    def batch(self, step: int, size: int):
        reps = -(-size // len(self.mixture))
        return (np.concatenate([self.mixture] * reps)[:size],
                np.concatenate([self.sources] * reps)[:size])


def _chunks(n: int, size: int):
    size = size or n
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def train_step(model: ModelGraph, mixture: np.ndarray, sources: np.ndarray, state: AdamState,
               lr: float, micro_batch: int = 0) -> float:
    """One Adam step on a batch; gradients accumulate over micro-batches."""
    model.zero_grad()
    n = len(mixture)
    total = 0.0
    for sl in _chunks(n, micro_batch):
        weight = (sl.stop - sl.start) / n
        with Tape() as tape:
            loss = separation_loss(forward(model, Tensor(mixture[sl])), Tensor(sources[sl]))
            scaled = ops.scale(loss, weight)
        backward(tape, scaled)
        total += float(loss.data) * weight
    if math.isfinite(total):
        adam_step({k: p.data for k, p in model.params.items()},
                  {k: p.grad for k, p in model.params.items()}, state, lr)
    return total


def evaluate_loss(model: ModelGraph, mixture: np.ndarray, sources: np.ndarray,
                  micro_batch: int = 0) -> float:
    n = len(mixture)
    total = 0.0
    with no_tape():
        for sl in _chunks(n, micro_batch):
            loss = separation_loss(forward(model, Tensor(mixture[sl])), Tensor(sources[sl]))
            total += float(loss.data) * (sl.stop - sl.start) / n
    return total


def _as_source(data, length: int, seed: int, augment: bool) -> BatchSource | None:
    if data is None:
        return None
    if isinstance(data, TrackSet):
        return SegmentSampler(data, length, seed, augment)
    return data


def train_loop(model: ModelGraph, trainset, valset, cfg: TrainConfig,
               optimizer: AdamState | None = None, start_step: int = 0) -> TrainResult:
    """Train for ``cfg.epochs`` epochs of ``cfg.steps_per_epoch`` steps.

    Batches depend only on (seed, global step), so resuming from a
    checkpoint taken at step s replays exactly the batches an uninterrupted
    run would have seen after s.
    """
    length = model.config.segment_length
    train_src = _as_source(trainset, length, cfg.seed, cfg.augment)
    val_src = _as_source(valset, length, cfg.seed + 1, False)
    state = optimizer or AdamState()
    history: list[dict] = []
    total_steps = cfg.epochs * cfg.steps_per_epoch
    with precision(cfg.precision):
        model.astype(np.float32 if cfg.precision == "float32" else np.float64)
        for name, p in model.params.items():
            if name in state.m:
                state.m[name] = state.m[name].astype(p.data.dtype)
                state.v[name] = state.v[name].astype(p.data.dtype)
        val_batch = val_src.batch(0, cfg.val_segments) if val_src is not None else None
        step = start_step
        while step < total_steps:
            mix, src = train_src.batch(step, cfg.batch_size)
            loss = train_step(model, mix, src, state, cfg.lr, cfg.micro_batch)
            if not math.isfinite(loss):
                raise TrainingDiverged(step)
            step += 1
            epoch = (step - 1) // cfg.steps_per_epoch
            row = dict(step=step, epoch=epoch + 1, train_loss=loss, val_loss=None)
            history.append(row)
            if step % cfg.steps_per_epoch == 0:
                if val_batch is not None:
                    row["val_loss"] = evaluate_loss(model, *val_batch, cfg.micro_batch)
                log.info("epoch %d step %d train %.6g val %s", epoch + 1, step, loss, row["val_loss"])
                done = step // cfg.steps_per_epoch
                if cfg.checkpoint_path and (done % cfg.checkpoint_interval == 0 or step == total_steps):
                    save_checkpoint(cfg.checkpoint_path, model, state, done, step)
    return TrainResult(model, state, step, history)


HISTORY_FIELDS = ("step", "epoch", "train_loss", "val_loss")


def write_history(path, history: list[dict], append: bool = False) -> None:
    path = Path(path)
    new = not append or not path.exists()
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(HISTORY_FIELDS)
        for row in history:
            w.writerow([row["step"], row["epoch"], repr(row["train_loss"]),
                        "" if row["val_loss"] is None else repr(row["val_loss"])])
