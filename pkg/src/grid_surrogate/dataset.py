"""Scenario-run datasets and their CSV persistence format.

File layout: one UTF-8 CSV per run with header
``time,V1,V2,V3,I1,I2,I3,P_DG1..P_DG10,Q_DG1..Q_DG10,f_DG1..f_DG10,scenario_label,scenario_id``
plus a ``.meta`` sidecar of ``key=value`` lines.  Floats are written with
``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .simulator import CHANNELS, N_CHANNELS, MeasurementFrame

HEADER: tuple[str, ...] = ("time",) + CHANNELS + ("scenario_label", "scenario_id")


@dataclass
class TimeSeriesDataset:
    time: np.ndarray  # (N,)
    channels: np.ndarray  # (N, 36) in CHANNELS order
    scenario_label: int
    scenario_id: str
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 2 or self.channels.shape[1] != N_CHANNELS:
            raise DatasetFormatError(f"expected (N, {N_CHANNELS}) channel matrix, got {self.channels.shape}")
        if self.time.shape != (self.channels.shape[0],):
            raise DatasetFormatError("time vector length does not match frame count")

    def __len__(self) -> int:
        return self.time.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeriesDataset):
            return NotImplemented
        return (self.scenario_label == other.scenario_label
                and self.scenario_id == other.scenario_id
                and self.metadata == other.metadata
                and np.array_equal(self.time, other.time)
                and np.array_equal(self.channels, other.channels))

    def frame(self, index: int) -> MeasurementFrame:
        return MeasurementFrame(time=float(self.time[index]), values=self.channels[index].copy())

    def column(self, name: str) -> np.ndarray:
        return self.channels[:, CHANNELS.index(name)]

    @property
    def dt_out(self) -> float:
        if "dt_out" in self.metadata:
            return float(self.metadata["dt_out"])
        return float(self.time[1] - self.time[0])

    @property
    def is_ood(self) -> bool:
        return self.metadata.get("is_ood", "false") == "true"

    def with_channels(self, channels: np.ndarray, **metadata: str) -> "TimeSeriesDataset":
        meta = dict(self.metadata)
        meta.update(metadata)
        return TimeSeriesDataset(time=self.time.copy(), channels=channels,
                                 scenario_label=self.scenario_label,
                                 scenario_id=self.scenario_id, metadata=meta)


def meta_path(path: str | os.PathLike) -> Path:
    return Path(path).with_suffix(".meta")


def write_dataset(ds: TimeSeriesDataset, path: str | os.PathLike) -> None:
    path = Path(path)
    label = str(int(ds.scenario_label))
    sid = ds.scenario_id
    if "," in sid or "\n" in sid:
        raise DatasetFormatError(f"scenario id {sid!r} contains a delimiter")
    lines = [",".join(HEADER)]
    data = np.column_stack([ds.time, ds.channels]).tolist()
    for row in data:
        lines.append(",".join(map(repr, row)) + f",{label},{sid}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    with open(meta_path(path), "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(ds.metadata):
            value = str(ds.metadata[key])
            if "\n" in value or "=" in key:
                raise DatasetFormatError(f"metadata entry {key!r} cannot be serialised")
            fh.write(f"{key}={value}\n")


def read_metadata(path: str | os.PathLike) -> dict[str, str]:
    mpath = meta_path(path)
    if not mpath.exists():
        return {}
    meta = {}
    with open(mpath, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DatasetFormatError(f"malformed metadata line in {mpath}", row=lineno)
            meta[key] = value
    return meta


def read_dataset(path: str | os.PathLike) -> TimeSeriesDataset:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if tuple(header) != HEADER:
            if len(header) != len(HEADER):
                raise DatasetFormatError(
                    f"expected {len(HEADER)} columns ({N_CHANNELS} channels), found {len(header)}", row=1)
            bad = next(i for i, (a, b) in enumerate(zip(header, HEADER)) if a != b)
            raise DatasetFormatError(f"column {bad + 1} is {header[bad]!r}, expected {HEADER[bad]!r}", row=1)
        rows = []
        label = sid = None
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(HEADER):
                raise DatasetFormatError(f"expected {len(HEADER)} fields, found {len(parts)}", row=lineno)
            try:
                rows.append([float(x) for x in parts[:-2]])
                row_label = int(parts[-2])
            except ValueError as exc:
                raise DatasetFormatError(f"unparseable value: {exc}", row=lineno) from None
            if label is None:
                label, sid = row_label, parts[-1]
            elif row_label != label or parts[-1] != sid:
                raise DatasetFormatError("scenario label/id changes within one file", row=lineno)
            if len(rows) > 1 and not rows[-1][0] > rows[-2][0]:
                raise DatasetFormatError("time column is not strictly increasing", row=lineno)
    if not rows:
        raise DatasetFormatError("dataset file has no frames", row=2)
    arr = np.array(rows)
    meta = read_metadata(path)
    if "dt_out" in meta and len(arr) > 1:
        dt = float(meta["dt_out"])
        gaps = np.diff(arr[:, 0])
        off = np.flatnonzero(np.abs(gaps - dt) > 1e-9 * dt)
        if off.size:
            raise DatasetFormatError(f"frame spacing differs from dt_out={dt!r}", row=int(off[0]) + 3)
    return TimeSeriesDataset(time=arr[:, 0], channels=arr[:, 1:], scenario_label=label,
                             scenario_id=sid, metadata=meta)
