"""Mini-batch training with adaptive moment estimates and early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, TrainingError
from .model import CnnArch, CnnModel, backward, predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 10
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ContractError("epochs, batch_size and patience must be positive")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")


def adam_update(model: CnnModel, grads: dict, s: TrainSettings) -> None:
    if not model.opt_m:
        model.opt_m = {k: np.zeros_like(v) for k, v in model.params.items()}
        model.opt_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    model.opt_step += 1
    t = model.opt_step
    c1 = 1.0 - s.beta1 ** t
    c2 = 1.0 - s.beta2 ** t
    for k, g in grads.items():
        m = model.opt_m[k]
        v = model.opt_v[k]
        m *= s.beta1
        m += (1.0 - s.beta1) * g
        v *= s.beta2
        v += (1.0 - s.beta2) * g * g
        model.params[k] -= s.learning_rate * (m / c1) / (np.sqrt(v / c2) + s.eps)


def canonical_order(x: np.ndarray, y: np.ndarray, keys=None) -> np.ndarray:
    """A sample order that does not depend on how the caller arranged the rows.

    ``keys`` is a tuple of arrays for ``np.lexsort`` (primary key last).
    Without keys the raw bytes of each (window, target) pair are sorted.
    """
    if keys is not None:
        return np.lexsort(keys)
    flat = np.ascontiguousarray(np.column_stack([x.reshape(x.shape[0], -1), y]))
    rows = flat.view(np.dtype((np.void, flat.dtype.itemsize * flat.shape[1]))).ravel()
    return np.argsort(rows, kind="stable")


def mse(model: CnnModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((predict(model, x) - y) ** 2))


def train(arch: CnnArch, train_x: np.ndarray, train_y: np.ndarray, val_x: np.ndarray, val_y: np.ndarray,
          settings: TrainSettings | None = None, keys=None, zero_output: bool = False) -> CnnModel:
    """Fit a fresh model and return it holding its best-validation weights.

    Samples are put in canonical order before the seeded per-epoch shuffle,
    so permuting the training rows does not change the result.
    """
    s = settings or TrainSettings()
    x = np.asarray(train_x, dtype=float)
    y = np.asarray(train_y, dtype=float).reshape(-1)
    vx = np.asarray(val_x, dtype=float)
    vy = np.asarray(val_y, dtype=float).reshape(-1)
    if x.shape[0] == 0 or x.shape[0] != y.shape[0]:
        raise ContractError(f"need matching non-empty training arrays, got {x.shape} and {y.shape}")
    if vx.shape[0] == 0 or vx.shape[0] != vy.shape[0]:
        raise ContractError("need matching non-empty validation arrays")
    for what, arr in (("training inputs", x), ("training targets", y), ("validation inputs", vx),
                      ("validation targets", vy)):
        if not np.all(np.isfinite(arr)):
            raise ContractError(f"non-finite values in {what}")
    order = canonical_order(x, y, keys)
    x, y = x[order], y[order]

    model = CnnModel.create(arch, s.seed, zero_output)
    model.check_input(x[:1])
    model.check_input(vx[:1])
    rng = np.random.default_rng([s.seed, 1])
    n = x.shape[0]
    best = np.inf
    stale = 0
    for epoch in range(s.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, s.batch_size):
            idx = perm[start:start + s.batch_size]
            loss, grads = backward(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite in epoch {epoch + 1}")
            total += loss * idx.size
            adam_update(model, grads, s)
        if not all(np.all(np.isfinite(p)) for p in model.params.values()):
            raise TrainingError(f"weights became non-finite in epoch {epoch + 1}")
        val = mse(model, vx, vy)
        if not np.isfinite(val):
            raise TrainingError(f"validation loss became non-finite in epoch {epoch + 1}")
        model.history["train_mse"].append(total / n)
        model.history["val_mse"].append(val)
        log.debug("epoch %d train %.4g val %.4g", epoch + 1, total / n, val)
        if val < best:
            best, stale = val, 0
            model.best_params = model.snapshot()
            model.best_epoch = epoch
        else:
            stale += 1
            if stale >= s.patience:
                break
    model.params = model.best_params
    return model
