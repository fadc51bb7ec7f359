"""Training: class balancing, flip/noise augmentation, mini-batch SGD."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import CnnConfig
from ..dishfeat import ClassLabel, DishPatch
from .model import NUM_CLASSES, CnnModel, backward_and_step, forward


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


def augment(dataset: list[tuple[DishPatch, ClassLabel]],
            cfg: CnnConfig) -> list[tuple[DishPatch, ClassLabel]]:
    """Balance classes by duplication, then emit the four variants per
    image: original, flipped, noisy original, noisy flipped.

    With flip_augment off only the original and its noisy copy are kept.
    Deterministic under cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    items = [(p.pixels, lab) for p, lab in dataset]

    if cfg.balance_classes and items:
        by_class: dict[int, list] = {}
        for px, lab in items:
            by_class.setdefault(lab.index, []).append((px, lab))
        target = max(len(v) for v in by_class.values())
        balanced = []
        for idx in sorted(by_class):
            group = by_class[idx]
            for k in range(target):
                balanced.append(group[k % len(group)])
        items = balanced

    variants = []
    for px, lab in items:
        variants.append((px, lab))
        if cfg.flip_augment:
            variants.append((px[:, ::-1, :], lab))
    sigma = np.sqrt(cfg.noise_variance)
    noisy = [(np.clip(px + rng.normal(0.0, sigma, px.shape), 0.0, 1.0), lab)
             for px, lab in variants]
    return [(DishPatch(pixels=np.ascontiguousarray(px), label=lab), lab)
            for px, lab in variants + noisy]


def _to_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([p.pixels for p, _ in dataset])
    y = np.array([lab.index for _, lab in dataset], dtype=int)
    return x, y


def train(dataset: list[tuple[DishPatch, ClassLabel]], cfg: CnnConfig,
          log_path: str | Path | None = None,
          use_augment: bool = True) -> tuple[CnnModel, list[EpochLog]]:
    """Shuffled mini-batch SGD with a held-out validation fraction.

    The data mean is computed from the training split; the learning rate
    decays once at two thirds of the epochs. Fully deterministic under
    cfg.seed.
    """
    if not dataset:
        raise ValueError("empty dataset")
    labels = {lab.index for _, lab in dataset}
    if len(labels) < 2:
        raise ValueError("training needs at least 2 classes")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(dataset))
    n_val = max(1, int(round(cfg.val_fraction * len(dataset))))
    val_items = [dataset[i] for i in order[:n_val]]
    train_items = [dataset[i] for i in order[n_val:]]
    if use_augment:
        train_items = augment(train_items, cfg)

    x_train, y_train = _to_arrays(train_items)
    x_val, y_val = _to_arrays(val_items)

    model = CnnModel.initialize(cfg.seed)
    model.data_mean = x_train.mean(axis=0)

    decay_epoch = max(1, (2 * cfg.epochs) // 3)
    lr = cfg.learning_rate
    logs = []
    for epoch in range(cfg.epochs):
        if epoch == decay_epoch:
            lr *= cfg.lr_decay
        perm = rng.permutation(len(x_train))
        losses = []
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            losses.append(backward_and_step(model, x_train[idx], y_train[idx], lr))
        val_loss, val_acc = _evaluate(model, x_val, y_val)
        logs.append(EpochLog(epoch=epoch, train_loss=float(np.mean(losses)),
                             val_loss=val_loss, val_accuracy=val_acc))
    if log_path is not None:
        write_log(logs, log_path)
    return model, logs


def _evaluate(model: CnnModel, x: np.ndarray, y: np.ndarray,
              chunk: int = 128) -> tuple[float, float]:
    losses, correct = [], 0
    for start in range(0, len(x), chunk):
        probs = forward(model, x[start:start + chunk])
        yy = y[start:start + chunk]
        losses.append(-np.log(probs[np.arange(len(yy)), yy] + 1e-300))
        correct += int((np.argmax(probs, axis=1) == yy).sum())
    return float(np.mean(np.concatenate(losses))), correct / len(x)


def write_log(logs: list[EpochLog], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for row in logs:
            writer.writerow([row.epoch, f"{row.train_loss:.6f}",
                             f"{row.val_loss:.6f}", f"{row.val_accuracy:.6f}"])
