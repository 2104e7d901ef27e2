"""Glue between datasets, windows and the two model families.

GBM models see the raw window statistics (trees are scale-free).  CNN models
see per-channel standardised windows and predict a standardised target; the
scalers are fitted on the training partition only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import cnn, gbm
from .dataset import TimeSeriesDataset
from .evaluation import HybridModel, fit_hybrid
from .scenarios import split_corpus
from .windows import DEFAULT_INPUTS, TARGET_KEYS, Scaler, WindowSet, fit_scaler, stat_names, windows_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowConfig:
    window: int = 100
    stride: int = 10
    horizon: int = 0
    inputs: tuple[str, ...] = DEFAULT_INPUTS


@dataclass
class Partitions:
    train: WindowSet
    val: WindowSet
    ood: dict[str, WindowSet]  # tag "ood_<scenario>" -> windows
    seq_scaler: Scaler
    target_scaler: Scaler
    runs: dict[str, list[str]] = field(default_factory=dict)

    def evaluation_sets(self, which: str = "all") -> dict[str, WindowSet]:
        out = {}
        if which in ("val", "all"):
            out["val"] = self.val
        if which in ("ood", "all"):
            out.update(self.ood)
        return out


def ood_tag(scenario_id: str) -> str:
    return "ood_" + {"comm_delay": "delay"}.get(scenario_id, scenario_id)


def build_partitions(datasets: Sequence[TimeSeriesDataset], wc: WindowConfig = WindowConfig(),
                     val_fraction: float = 0.25, seed: int = 42) -> Partitions:
    train_ds, val_ds, ood_ds = split_corpus(datasets, val_fraction, seed)
    kw = dict(window=wc.window, stride=wc.stride, horizon=wc.horizon, inputs=wc.inputs)
    train = windows_for(train_ds, **kw)
    val = windows_for(val_ds, **kw)
    ood = {ood_tag(d.scenario_id): windows_for([d], **kw) for d in sorted(ood_ds, key=lambda d: d.scenario_id)}
    for name, ws in [("train", train), ("val", val)] + list(ood.items()):
        if len(ws) == 0:
            raise ValueError(f"partition {name} has no complete windows")
    runs = {"train": [d.scenario_id for d in train_ds], "val": [d.scenario_id for d in val_ds],
            "ood": [d.scenario_id for d in ood_ds]}
    return Partitions(train, val, ood, fit_scaler(train.sequences), fit_scaler(train.targets), runs)


def feature_names(wc: WindowConfig) -> list[str]:
    return stat_names(wc.inputs)


def train_gbm(parts: Partitions, target: str, hp: gbm.GbmHyperparams, wc: WindowConfig) -> gbm.GbmModel:
    j = TARGET_KEYS.index(target)
    return gbm.fit(parts.train.stats, parts.train.targets[:, j], (parts.val.stats, parts.val.targets[:, j]),
                   hp, feature_names(wc))


def train_cnn(parts: Partitions, target: str, arch: cnn.CnnArch, settings: cnn.TrainSettings) -> cnn.CnnModel:
    j = TARGET_KEYS.index(target)
    ts = parts.target_scaler
    x = parts.seq_scaler.transform(parts.train.sequences)
    y = (parts.train.targets[:, j] - ts.mean[j]) / ts.std[j]
    vx = parts.seq_scaler.transform(parts.val.sequences)
    vy = (parts.val.targets[:, j] - ts.mean[j]) / ts.std[j]
    keys = (parts.train.end_index, parts.train.scenario_ids)
    return cnn.train(arch, x, y, vx, vy, settings, keys=keys)


def predict_gbm(models: Mapping[str, gbm.GbmModel], ws: WindowSet, wc: WindowConfig | None = None
                ) -> dict[str, np.ndarray]:
    names = feature_names(wc) if wc is not None else None
    return {k: gbm.predict(m, ws.stats, names) for k, m in models.items()}


def predict_cnn(models: Mapping[str, cnn.CnnModel], ws: WindowSet, seq_scaler: Scaler, target_scaler: Scaler
                ) -> dict[str, np.ndarray]:
    x = seq_scaler.transform(ws.sequences)
    out = {}
    for k, m in models.items():
        j = TARGET_KEYS.index(k)
        out[k] = cnn.predict(m, x) * target_scaler.std[j] + target_scaler.mean[j]
    return out


def fit_blend(parts: Partitions, gbm_models, cnn_models, wc: WindowConfig | None = None) -> HybridModel:
    g = predict_gbm(gbm_models, parts.val, wc)
    c = predict_cnn(cnn_models, parts.val, parts.seq_scaler, parts.target_scaler)
    y = {k: parts.val.targets[:, TARGET_KEYS.index(k)] for k in g if k in c}
    return fit_hybrid(c, g, y)


def predict_hybrid(hybrid: HybridModel, gbm_pred: Mapping[str, np.ndarray], cnn_pred: Mapping[str, np.ndarray]
                   ) -> dict[str, np.ndarray]:
    return {k: hybrid.combine(k, cnn_pred[k], gbm_pred[k]) for k in hybrid.alpha}
