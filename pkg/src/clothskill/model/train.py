"""Deterministic minibatch training of the affordance network."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import EmptyDataset, TrainingDiverged
from .affordance import (
    Batch,
    ModelConfig,
    batch_loss,
    fit_image,
    forward_logits,
    grad,
    heatmap_from_logits,
    init_params,
    predict_points,
    to_model_pixel,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .tokenizer import tokenize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 40
    batch_size: int = 32
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    holdout_fraction: float = 0.1
    patience: int = 6
    min_delta: float = 1e-3

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainArrays:
    images: np.ndarray  # (n, H, W)
    tokens: np.ndarray  # (n, T)
    pixels: np.ndarray  # (n, 2)

    def __len__(self) -> int:
        return len(self.pixels)

    def take(self, idx) -> Batch:
        return Batch(self.images[idx], self.tokens[idx], self.pixels[idx])


def arrays_from_triples(triples, config: ModelConfig) -> TrainArrays:
    """Stack skill triples (anything with .image, .instruction, .action.pixel) into arrays."""
    if not triples:
        return TrainArrays(np.zeros((0, config.image_size, config.image_size), np.float32),
                           np.zeros((0, config.max_text_len), np.int64), np.zeros((0, 2), np.int64))
    images = np.stack([fit_image(t.image, config.image_size) for t in triples])
    tokens = np.stack([tokenize(t.instruction.text, config.max_text_len) for t in triples])
    pixels = np.array([to_model_pixel(t.action.pixel, np.shape(t.image)[0], config.image_size)
                       for t in triples], dtype=np.int64)
    return TrainArrays(images, tokens, pixels)


def split_holdout(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng([seed, 7919]).permutation(n)
    n_hold = int(round(n * fraction)) if n > 1 else 0
    return np.sort(order[n_hold:]), np.sort(order[:n_hold])


def argmax_accuracy(params, data: TrainArrays, config: ModelConfig, tol_px: float | None = None,
                    chunk: int = 64) -> float | None:
    """Fraction of samples whose heatmap argmax lies within ``tol_px`` (default one patch)."""
    if len(data) == 0:
        return None
    tol = config.patch_size if tol_px is None else tol_px
    hits = 0
    for s in range(0, len(data), chunk):
        b = data.take(slice(s, s + chunk))
        logits, _ = forward_logits(params, b.images, b.tokens, config)
        flat = np.argmax(heatmap_from_logits(logits, config.image_size).reshape(len(b.pixels), -1), axis=1)
        pred = np.stack([flat % config.image_size, flat // config.image_size], axis=1)
        hits += int(np.sum(np.linalg.norm(pred - b.pixels, axis=1) <= tol))
    return hits / len(data)


def _adam_state(params):
    return ({k: np.zeros_like(v) for k, v in params.items()},
            {k: np.zeros_like(v) for k, v in params.items()})


def train(data: TrainArrays, config: ModelConfig, hyper: TrainHyper = TrainHyper(), seed: int = 0,
          resume: str | Path | None = None, log_path: str | Path | None = None,
          on_epoch: Callable[[int, dict, dict], None] | None = None):
    """Train from scratch (or resume a CAFM checkpoint). Returns (params, log_rows, state).

    Shuffling for epoch e uses a generator seeded by (seed, e), so a resumed
    run reproduces the same batches as an uninterrupted one.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    train_idx, hold_idx = split_holdout(len(data), hyper.holdout_fraction, seed)
    holdout = TrainArrays(data.images[hold_idx], data.tokens[hold_idx], data.pixels[hold_idx])

    if resume is not None:
        params, config, meta, extra = load_checkpoint(resume)
        m = {k: extra[f"adam_m/{k}"].copy() for k in params}
        v = {k: extra[f"adam_v/{k}"].copy() for k in params}
        start, step = int(meta["epoch"]), int(meta["adam_step"])
        rows = list(meta.get("log", []))
        best, stale = float(meta["best_loss"]), int(meta["stale"])
    else:
        params = init_params(config, seed)
        m, v = _adam_state(params)
        start, step, rows = 0, 0, []
        best, stale = float("inf"), 0

    dt = np.dtype(config.dtype)
    for epoch in range(start, hyper.epochs):
        order = train_idx[np.random.default_rng([seed, epoch]).permutation(len(train_idx))]
        total, count = 0.0, 0
        for s in range(0, len(order), hyper.batch_size):
            idx = order[s:s + hyper.batch_size]
            value, g = grad(params, data.take(idx), config)
            step += 1
            c1 = 1.0 - hyper.beta1**step
            c2 = 1.0 - hyper.beta2**step
            for k in params:
                m[k] = (hyper.beta1 * m[k] + (1 - hyper.beta1) * g[k]).astype(dt)
                v[k] = (hyper.beta2 * v[k] + (1 - hyper.beta2) * g[k] * g[k]).astype(dt)
                upd = hyper.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + hyper.adam_eps)
                params[k] = (params[k] - upd).astype(dt)
            total += value * len(idx)
            count += len(idx)
        train_loss = total / count
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"training loss became non-finite at epoch {epoch}")
        acc = argmax_accuracy(params, holdout, config)
        row = {"epoch": epoch, "train_loss": train_loss, "holdout_argmax_acc": acc}
        rows.append(row)
        log.info("epoch %d loss %.4f holdout acc %s", epoch, train_loss, acc)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        if best - train_loss > hyper.min_delta:
            best, stale = train_loss, 0
        else:
            stale += 1
        state = {"epoch": epoch + 1, "adam_step": step, "best_loss": best, "stale": stale,
                 "log": rows, "seed": seed, "hyper": hyper.to_dict(), "m": m, "v": v}
        if on_epoch is not None:
            on_epoch(epoch, params, state)
        if stale >= hyper.patience:
            log.info("loss plateaued for %d epochs; stopping", stale)
            break
    state = {"epoch": len(rows), "adam_step": step, "best_loss": best, "stale": stale,
             "log": rows, "seed": seed, "hyper": hyper.to_dict(), "m": m, "v": v}
    return params, rows, state


def save_training_checkpoint(path, params, config: ModelConfig, state: dict) -> None:
    meta = {k: state[k] for k in ("epoch", "adam_step", "best_loss", "stale", "log", "seed", "hyper")}
    extra = {f"adam_m/{k}": a for k, a in state["m"].items()}
    extra.update({f"adam_v/{k}": a for k, a in state["v"].items()})
    save_checkpoint(path, params, config, meta, extra)


def evaluate_loss(params, data: TrainArrays, config: ModelConfig) -> float:
    return batch_loss(params, data.take(slice(None)), config)


__all__ = [
    "TrainArrays",
    "TrainHyper",
    "argmax_accuracy",
    "arrays_from_triples",
    "evaluate_loss",
    "predict_points",
    "save_training_checkpoint",
    "split_holdout",
    "train",
]
