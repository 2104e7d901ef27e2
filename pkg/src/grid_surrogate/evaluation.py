"""Regression metrics, the convex CNN/GBM blend, and evaluation reports."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, ParameterError
from .perturb import inject_delay, inject_noise  # noqa: F401  (re-exported)
from .windows import TARGET_KEYS, TARGETS


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape or y.size == 0:
        raise ParameterError("y", f"need equal non-zero lengths, got {y.size} and {yhat.size}")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def r2(y, yhat) -> float | None:
    """Coefficient of determination; None when y has zero variance (undefined)."""
    y, yhat = _pair(y, yhat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return None
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def blend_weight(cnn, gbm, y) -> float:
    """Least-squares alpha for alpha*cnn + (1-alpha)*gbm, clamped to [0, 1].

    Identical predictors give 0.5: every alpha yields the same output.
    """
    cnn, y = _pair(cnn, y)
    gbm = np.asarray(gbm, dtype=float).ravel()
    if gbm.shape != y.shape:
        raise ParameterError("gbm", "prediction lengths differ")
    d = cnn - gbm
    denom = float(np.dot(d, d))
    if denom == 0.0:
        return 0.5
    return float(np.clip(np.dot(d, y - gbm) / denom, 0.0, 1.0))


@dataclass
class HybridModel:
    alpha: dict[str, float]
    cnn: Mapping | None = None
    gbm: Mapping | None = None

    def __post_init__(self):
        for k, a in self.alpha.items():
            if not 0.0 <= a <= 1.0:
                raise ContractError(f"blend weight for {k} is {a}, outside [0, 1]")

    def combine(self, target: str, cnn_pred, gbm_pred) -> np.ndarray:
        a = self.alpha[target]
        return a * np.asarray(cnn_pred, dtype=float) + (1.0 - a) * np.asarray(gbm_pred, dtype=float)

    def to_dict(self) -> dict:
        return {"format": "hybrid-model", "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "HybridModel":
        if d.get("format") != "hybrid-model":
            raise ContractError("not a hybrid model file")
        return cls({k: float(v) for k, v in d["alpha"].items()})


def fit_hybrid(cnn_val: Mapping[str, np.ndarray], gbm_val: Mapping[str, np.ndarray],
               y_val: Mapping[str, np.ndarray], cnn=None, gbm=None) -> HybridModel:
    """Per-target blend weights fitted on validation predictions."""
    missing = set(y_val) - set(cnn_val) | set(y_val) - set(gbm_val)
    if missing:
        raise ContractError(f"no base predictions for targets {sorted(missing)}")
    return HybridModel({k: blend_weight(cnn_val[k], gbm_val[k], y_val[k]) for k in y_val}, cnn, gbm)


@dataclass
class MetricRecord:
    partition: str
    model: str
    target: str
    n: int
    rmse: float
    mae: float
    r2: float | None

    @property
    def r2_defined(self) -> bool:
        return self.r2 is not None


@dataclass
class MetricsReport:
    records: list[MetricRecord] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)
    config_hash: str = ""

    def add(self, partition: str, model: str, target: str, y, yhat) -> MetricRecord:
        rec = MetricRecord(partition, model, target, int(np.size(y)), rmse(y, yhat), mae(y, yhat), r2(y, yhat))
        self.records.append(rec)
        return rec

    def get(self, partition: str, model: str, target: str) -> MetricRecord:
        for r in self.records:
            if (r.partition, r.model, r.target) == (partition, model, target):
                return r
        raise KeyError((partition, model, target))

    def partitions(self) -> list[str]:
        return list(dict.fromkeys(r.partition for r in self.records))

    def to_dict(self) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            d["r2"] = "undefined" if r.r2 is None else r.r2
            recs.append(d)
        return {"config_hash": self.config_hash, "timing": self.timing, "records": recs}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        recs = []
        for r in d["records"]:
            r = dict(r)
            r["r2"] = None if r["r2"] == "undefined" else float(r["r2"])
            recs.append(MetricRecord(**r))
        return cls(recs, dict(d.get("timing", {})), d.get("config_hash", ""))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MetricsReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def table(self) -> str:
        lines = [f"{'partition':<10} {'model':<7} {'target':<8} {'n':>6} {'rmse':>12} {'mae':>12} {'r2':>9}"]
        for r in self.records:
            r2s = "undef" if r.r2 is None else f"{r.r2:.4f}"
            lines.append(f"{r.partition:<10} {r.model:<7} {r.target:<8} {r.n:>6} {r.rmse:>12.5g} "
                         f"{r.mae:>12.5g} {r2s:>9}")
        return "\n".join(lines)


Predictor = Callable[[object], Mapping[str, np.ndarray]]


def evaluate(predictors: Mapping[str, Predictor], partitions: Mapping[str, object],
             targets: Sequence[str] = TARGET_KEYS, config_hash: str = "") -> MetricsReport:
    """Score every predictor on every partition.

    ``partitions`` maps a tag (val, ood_noise, ...) to a window set; each
    predictor maps a window set to per-target predictions in target units.
    """
    report = MetricsReport(config_hash=config_hash)
    for tag, windows in partitions.items():
        y = {k: windows.targets[:, TARGET_KEYS.index(k)] for k in targets}
        for name, fn in predictors.items():
            preds = fn(windows)
            for k in targets:
                if k not in preds:
                    raise ContractError(f"model {name} produced no prediction for {k}")
                report.add(tag, name, k, y[k], preds[k])
    return report


def target_name(key: str) -> str:
    return TARGETS[TARGET_KEYS.index(key)]
