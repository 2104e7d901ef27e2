"""Stage-wise gradient boosting under squared loss."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ContractError, DataError, ParameterError
from . import _kernels
from .histogram import fit_bins
from .tree import RegressionTree, grow_tree

FORMAT_VERSION = 1


@dataclass(frozen=True)
class GbmHyperparams:
    learning_rate: float = 0.05
    n_estimators: int = 300
    max_depth: int = 6
    num_leaves: int = 31
    min_child_samples: int = 20
    subsample: float = 0.8
    colsample: float = 0.8
    n_bins: int = 255
    seed: int = 42
    early_stopping: int = 25

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ParameterError("learning_rate", f"must lie in (0, 1], got {self.learning_rate}")
        for name in ("subsample", "colsample"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ParameterError(name, f"must lie in (0, 1], got {v}")
        if self.num_leaves < 2:
            raise ParameterError("num_leaves", "must be at least 2")
        if self.n_estimators < 0:
            raise ParameterError("n_estimators", "must be non-negative")
        if self.min_child_samples < 1:
            raise ParameterError("min_child_samples", "must be at least 1")
        if not 2 <= self.n_bins <= 256:
            raise ParameterError("n_bins", "must lie in [2, 256]")


def schema_hash(n_features: int, names: Sequence[str] | None = None) -> str:
    names = list(names) if names is not None else [f"f{j}" for j in range(n_features)]
    if len(names) != n_features:
        raise ContractError(f"{len(names)} feature names for {n_features} columns")
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:16]


@dataclass
class GbmModel:
    init_value: float
    trees: list[RegressionTree]
    hyperparams: GbmHyperparams
    schema: str
    n_features: int
    history: dict[str, list[float]] = field(default_factory=dict)
    best_iteration: int = 0
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self._pack()

    def _pack(self):
        sizes = [t.n_nodes for t in self.trees]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

        def cat(attr, dtype):
            if not self.trees:
                return np.empty(0, dtype=dtype)
            return np.ascontiguousarray(np.concatenate([getattr(t, attr) for t in self.trees]), dtype=dtype)

        self._packed = (cat("feature", np.int64), cat("threshold", float), cat("left", np.int64),
                        cat("right", np.int64), cat("value", float))

    def raw_predict(self, x: np.ndarray) -> np.ndarray:
        out = np.full(x.shape[0], self.init_value)
        if self.trees:
            f, thr, le, ri, val = self._packed
            _kernels.accumulate_ensemble(x, self._offsets, f, thr, le, ri, val,
                                         self.hyperparams.learning_rate, out)
        return out

    def to_dict(self) -> dict:
        return {
            "format": "gbm-model",
            "version": FORMAT_VERSION,
            "hyperparams": asdict(self.hyperparams),
            "init_value": self.init_value,
            "schema": self.schema,
            "n_features": self.n_features,
            "best_iteration": self.best_iteration,
            "history": self.history,
            "metadata": self.metadata,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbmModel":
        if d.get("format") != "gbm-model" or d.get("version") != FORMAT_VERSION:
            raise ContractError(f"not a version-{FORMAT_VERSION} gbm model file")
        return cls(init_value=float(d["init_value"]), trees=[RegressionTree.from_dict(t) for t in d["trees"]],
                   hyperparams=GbmHyperparams(**d["hyperparams"]), schema=d["schema"],
                   n_features=int(d["n_features"]), history=d.get("history", {}),
                   best_iteration=int(d.get("best_iteration", len(d["trees"]))),
                   metadata=dict(d.get("metadata", {})))


def check_finite(x: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        idx = np.argwhere(bad)[0]
        where = f"row {idx[0]}" + (f", column {idx[1]}" if idx.size > 1 else "")
        raise DataError(f"non-finite value in {what} at {where}")


def fit(x: np.ndarray, y: np.ndarray, validation: tuple[np.ndarray, np.ndarray] | None = None,
        hyperparams: GbmHyperparams | None = None, feature_names: Sequence[str] | None = None) -> GbmModel:
    """Boost regression trees on the residuals of the running prediction.

    Each stage draws a row subsample and a feature subsample from a generator
    seeded once per fit.  When ``validation`` is given, training stops after
    ``early_stopping`` stages without a validation improvement and the model
    is truncated to its best stage.
    """
    hp = hyperparams or GbmHyperparams()
    x = np.ascontiguousarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ParameterError("features", f"shape {x.shape} does not match {y.shape[0]} targets")
    if x.shape[0] == 0:
        raise DataError("empty training set")
    check_finite(x, "training features")
    check_finite(y, "training targets")
    n, n_feat = x.shape
    if validation is not None:
        xv = np.ascontiguousarray(validation[0], dtype=float)
        yv = np.asarray(validation[1], dtype=float).ravel()
        if xv.ndim != 2 or xv.shape[1] != n_feat or xv.shape[0] != yv.shape[0]:
            raise ParameterError("validation", "validation shapes do not match training features")
        check_finite(xv, "validation features")
        check_finite(yv, "validation targets")
        if xv.shape[0] == 0:
            validation = None

    mapper = fit_bins(x, hp.n_bins)
    binned = mapper.transform(x)
    init = float(y.mean())
    pred = np.full(n, init)
    history: dict[str, list[float]] = {"train_mse": [float(np.mean((y - pred) ** 2))]}
    if validation is not None:
        vpred = np.full(xv.shape[0], init)
        history["val_mse"] = [float(np.mean((yv - vpred) ** 2))]
        best_val, best_m, stale = history["val_mse"][0], 0, 0

    rng = np.random.default_rng(hp.seed)
    n_rows = max(1, int(round(hp.subsample * n)))
    n_cols = max(1, int(round(hp.colsample * n_feat)))
    all_rows = np.arange(n, dtype=np.int64)
    all_cols = np.arange(n_feat, dtype=np.int64)
    trees: list[RegressionTree] = []
    one = np.array([0, 0], dtype=np.int64)
    for m in range(hp.n_estimators):
        rows = all_rows if n_rows == n else np.sort(rng.choice(n, n_rows, replace=False))
        cols = all_cols if n_cols == n_feat else np.sort(rng.choice(n_feat, n_cols, replace=False))
        resid = y - pred
        tree = grow_tree(binned, rows, resid, cols, mapper, hp.num_leaves, hp.max_depth, hp.min_child_samples)
        trees.append(tree)
        _kernels.accumulate_binned(binned, tree.feature, tree.bin_threshold, tree.left, tree.right,
                                   tree.value, hp.learning_rate, pred)
        history["train_mse"].append(float(np.mean((y - pred) ** 2)))
        if validation is not None:
            one[1] = tree.n_nodes
            _kernels.accumulate_ensemble(xv, one, tree.feature, tree.threshold, tree.left, tree.right,
                                         tree.value, hp.learning_rate, vpred)
            v = float(np.mean((yv - vpred) ** 2))
            history["val_mse"].append(v)
            if v < best_val:
                best_val, best_m, stale = v, m + 1, 0
            else:
                stale += 1
                if stale >= hp.early_stopping:
                    break
    best = best_m if validation is not None else len(trees)
    model = GbmModel(init_value=init, trees=trees[:best], hyperparams=hp,
                     schema=schema_hash(n_feat, feature_names), n_features=n_feat,
                     history=history, best_iteration=best)
    model._train_pred = pred if best == len(trees) else None
    return model


def predict(model: GbmModel, x: np.ndarray, feature_names: Sequence[str] | None = None) -> np.ndarray:
    """``init_value + learning_rate * sum of tree outputs`` for each row."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ContractError(f"model expects {model.n_features} features, got shape {x.shape}")
    if feature_names is not None and schema_hash(x.shape[1], feature_names) != model.schema:
        raise ContractError("feature schema differs from the one the model was trained on")
    return model.raw_predict(x)


def save_model(model: GbmModel, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(model.to_dict()), encoding="utf-8")


def load_model(path: str | os.PathLike) -> GbmModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: not a model file ({exc})") from None
    return GbmModel.from_dict(d)
