"""Derived channels, sliding windows, window statistics, and standard scaling."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import TimeSeriesDataset
from .errors import DataError, ParameterError
from .simulator import CHANNELS, MeasurementFrame

STATS = ("mean", "std", "min", "max", "last")
TARGETS = ("V_mag", "f_DG1", "P_total", "V_dip")
TARGET_KEYS = ("vmag", "fdg1", "ptotal", "vdip")
DERIVED = ("P_total", "Q_total")
DEFAULT_INPUTS: tuple[str, ...] = CHANNELS + DERIVED

_P_COLS = [CHANNELS.index(f"P_DG{k}") for k in range(1, 11)]
_Q_COLS = [CHANNELS.index(f"Q_DG{k}") for k in range(1, 11)]
_F1_COL = CHANNELS.index("f_DG1")


def nominal_vmag(v_nom_ll: float) -> float:
    """Balanced-nominal value of sqrt(V1^2+V2^2+V3^2): sqrt(3) times the phase RMS."""
    v_phase_rms = v_nom_ll / math.sqrt(3.0)
    return math.sqrt(3.0) * v_phase_rms


@dataclass(frozen=True)
class DerivedChannels:
    v_mag: float
    p_total: float
    q_total: float
    v_dip: float


def derive_channels(frame: MeasurementFrame, v_nom_mag: float) -> DerivedChannels:
    if not v_nom_mag > 0:
        raise ParameterError("v_nom_mag", "must be positive")
    vals = frame.values
    v_mag = math.sqrt(vals[0] ** 2 + vals[1] ** 2 + vals[2] ** 2)
    p_total = float(np.sum(vals[_P_COLS]))
    q_total = float(np.sum(vals[_Q_COLS]))
    return DerivedChannels(v_mag, p_total, q_total, voltage_dip(v_mag, v_nom_mag))


def voltage_dip(v_mag, v_nom_mag):
    return np.clip((v_nom_mag - v_mag) / v_nom_mag, 0.0, 1.0)


def derived_matrix(ds: TimeSeriesDataset) -> dict[str, np.ndarray]:
    """Vectorised derived channels for a whole run."""
    ch = ds.channels
    v_mag = np.sqrt(ch[:, 0] ** 2 + ch[:, 1] ** 2 + ch[:, 2] ** 2)
    v_nom = nominal_vmag(float(ds.metadata.get("v_nom_ll", 480.0)))
    return {
        "V_mag": v_mag,
        "P_total": ch[:, _P_COLS].sum(axis=1),
        "Q_total": ch[:, _Q_COLS].sum(axis=1),
        "V_dip": voltage_dip(v_mag, v_nom),
    }


def input_matrix(ds: TimeSeriesDataset, inputs: Sequence[str] = DEFAULT_INPUTS) -> np.ndarray:
    derived = None
    cols = []
    for name in inputs:
        if name in CHANNELS:
            cols.append(ds.channels[:, CHANNELS.index(name)])
        else:
            if derived is None:
                derived = derived_matrix(ds)
            if name not in derived:
                raise ParameterError("inputs", f"unknown input channel {name!r}")
            cols.append(derived[name])
    return np.column_stack(cols)


def target_matrix(ds: TimeSeriesDataset) -> np.ndarray:
    d = derived_matrix(ds)
    return np.column_stack([d["V_mag"], ds.channels[:, _F1_COL], d["P_total"], d["V_dip"]])


def extract_stats(sequence: np.ndarray) -> np.ndarray:
    """Per-channel (mean, std, min, max, last) of a W x d window, channel-major.

    Also accepts a stack of windows (n, W, d) and returns (n, 5*d).  Both
    paths run the same reductions so a single window reproduces its row of a
    batch bit-for-bit.
    """
    seq = np.asarray(sequence, dtype=float)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[1] == 0:
        raise ParameterError("sequence", f"expected a non-empty (W, d) window, got {np.shape(sequence)}")
    out = np.stack([seq.mean(axis=1), seq.std(axis=1), seq.min(axis=1), seq.max(axis=1), seq[:, -1, :]],
                   axis=2)
    out = out.reshape(seq.shape[0], -1)
    return out[0] if single else out


def stat_names(inputs: Sequence[str] = DEFAULT_INPUTS) -> list[str]:
    return [f"{c}_{s}" for c in inputs for s in STATS]


@dataclass(frozen=True)
class WindowSample:
    sequence: np.ndarray
    stats: np.ndarray
    target: np.ndarray
    source: tuple[str, int]


@dataclass
class WindowSet:
    """Windows from one or more runs, stored as stacked arrays."""

    sequences: np.ndarray  # (n, W, d)
    stats: np.ndarray  # (n, 5d)
    targets: np.ndarray  # (n, 4)
    scenario_ids: np.ndarray  # (n,) str
    end_index: np.ndarray  # (n,) int, index of the window's last frame
    inputs: tuple[str, ...] = DEFAULT_INPUTS
    counts: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.targets.shape[0]

    def __iter__(self) -> Iterator[WindowSample]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> WindowSample:
        return WindowSample(self.sequences[i], self.stats[i], self.targets[i],
                            (str(self.scenario_ids[i]), int(self.end_index[i])))

    @property
    def window(self) -> int:
        return self.sequences.shape[1]

    def sort_keys(self) -> np.ndarray:
        """Canonical order (scenario id, end index), independent of input order."""
        return np.lexsort((self.end_index, self.scenario_ids))

    @classmethod
    def concat(cls, parts: Sequence["WindowSet"]) -> "WindowSet":
        parts = list(parts)
        if not parts:
            raise DataError("no window sets to concatenate")
        counts = {}
        for p in parts:
            counts.update(p.counts)
        return cls(
            sequences=np.concatenate([p.sequences for p in parts]),
            stats=np.concatenate([p.stats for p in parts]),
            targets=np.concatenate([p.targets for p in parts]),
            scenario_ids=np.concatenate([p.scenario_ids for p in parts]),
            end_index=np.concatenate([p.end_index for p in parts]),
            inputs=parts[0].inputs,
            counts=counts,
        )


def window_count(n: int, window: int, stride: int, horizon: int) -> int:
    if n < window + horizon:
        return 0
    return (n - window - horizon) // stride + 1


def make_windows(ds: TimeSeriesDataset, window: int = 100, stride: int = 10, horizon: int = 0,
                 inputs: Sequence[str] = DEFAULT_INPUTS) -> WindowSet:
    """Slide a ``window``-frame window with step ``stride`` over one run.

    Sample j covers frames [j*stride, j*stride + window) and its target is
    read at frame j*stride + window - 1 + horizon.  A run too short for one
    window yields an empty set (recorded in ``counts``) rather than an error.
    """
    if window < 1 or stride < 1 or horizon < 0:
        raise ParameterError("window", f"need window>=1, stride>=1, horizon>=0; got {window}, {stride}, {horizon}")
    x = input_matrix(ds, inputs)
    y = target_matrix(ds)
    n = window_count(len(ds), window, stride, horizon)
    d = x.shape[1]
    if n == 0:
        return WindowSet(np.empty((0, window, d)), np.empty((0, 5 * d)), np.empty((0, 4)),
                         np.empty(0, dtype=str), np.empty(0, dtype=int), tuple(inputs),
                         {ds.scenario_id: 0})
    starts = np.arange(n) * stride
    view = sliding_window_view(x, window, axis=0)[starts]  # (n, d, W)
    seqs = np.ascontiguousarray(view.transpose(0, 2, 1))
    ends = starts + window - 1
    return WindowSet(
        sequences=seqs,
        stats=extract_stats(seqs),
        targets=y[ends + horizon],
        scenario_ids=np.array([ds.scenario_id] * n),
        end_index=ends,
        inputs=tuple(inputs),
        counts={ds.scenario_id: n},
    )


def windows_for(datasets: Sequence[TimeSeriesDataset], window: int = 100, stride: int = 10,
                horizon: int = 0, inputs: Sequence[str] = DEFAULT_INPUTS) -> WindowSet:
    return WindowSet.concat([make_windows(ds, window, stride, horizon, inputs) for ds in datasets])


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray  # bool, features whose std was replaced by 1

    @property
    def flagged(self) -> bool:
        return bool(self.degenerate.any())

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "degenerate": self.degenerate.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float),
                   np.array(d["degenerate"], dtype=bool))


def fit_scaler(x: np.ndarray, rtol: float = 1e-12) -> Scaler:
    """Column-wise standardisation fitted on the training rows of ``x``.

    ``x`` may be (n, F) or (n, W, d); for windows the statistics are taken per
    channel over all samples and time steps.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        raise DataError("cannot fit a scaler on an empty training set")
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    # A constant column can come out with std of a few ulps from rounding in the mean.
    degenerate = ~(std > rtol * np.maximum(np.abs(mean), 1.0))
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} zero-variance feature(s) scaled with std=1", RuntimeWarning,
                      stacklevel=2)
    std = np.where(degenerate, 1.0, std)
    # the float mean of a constant column can be off by an ulp; use the value itself
    lo = flat.min(axis=0)
    mean = np.where(degenerate & (lo == flat.max(axis=0)), lo, mean)
    return Scaler(mean=mean, std=std, degenerate=degenerate)


def apply_scaler(scaler: Scaler, x: np.ndarray) -> np.ndarray:
    return scaler.transform(x)
