import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grid_surrogate.dataset import HEADER, TimeSeriesDataset, read_dataset, write_dataset
from grid_surrogate.errors import DatasetFormatError


def make(n=5, seed=0):
    rng = np.random.default_rng(seed)
    return TimeSeriesDataset(np.arange(n) * 1e-4, rng.normal(size=(n, 36)) * 1e3, 3, "voltage_sag",
                             {"dt_out": "0.0001", "seed": "42"})


def test_header_layout():
    assert len(HEADER) == 39
    assert HEADER[0] == "time" and HEADER[-2:] == ("scenario_label", "scenario_id")


def test_round_trip_is_exact(tmp_path):
    ds = make()
    write_dataset(ds, tmp_path / "a.csv")
    assert read_dataset(tmp_path / "a.csv") == ds


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (4, 36), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_round_trip_any_finite_values(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    ds = TimeSeriesDataset(np.arange(4) * 0.5, values, 0, "normal")
    write_dataset(ds, path)
    assert read_dataset(path) == ds


def _rewrite(path, fn):
    lines = path.read_text().splitlines()
    path.write_text("\n".join(fn(lines)) + "\n")


def test_missing_channel_column(tmp_path):
    p = tmp_path / "a.csv"
    write_dataset(make(), p)
    _rewrite(p, lambda ls: [",".join(l.split(",")[:5] + l.split(",")[6:]) for l in ls])
    with pytest.raises(DatasetFormatError, match="35 channels|38"):
        read_dataset(p)


def test_wrong_column_order(tmp_path):
    p = tmp_path / "a.csv"
    write_dataset(make(), p)

    def swap(ls):
        h = ls[0].split(",")
        h[1], h[2] = h[2], h[1]
        return [",".join(h)] + ls[1:]

    _rewrite(p, swap)
    with pytest.raises(DatasetFormatError) as err:
        read_dataset(p)
    assert err.value.row == 1


def test_non_monotone_time_reports_row(tmp_path):
    p = tmp_path / "a.csv"
    write_dataset(make(), p)
    _rewrite(p, lambda ls: ls[:3] + [ls[2]] + ls[4:])
    with pytest.raises(DatasetFormatError) as err:
        read_dataset(p)
    assert err.value.row == 4


def test_uneven_spacing_rejected(tmp_path):
    p = tmp_path / "a.csv"
    ds = make()
    ds.time[3] += 1e-5
    write_dataset(ds, p)
    with pytest.raises(DatasetFormatError):
        read_dataset(p)


def test_constructor_checks_shape():
    with pytest.raises(DatasetFormatError):
        TimeSeriesDataset(np.arange(3), np.zeros((3, 35)), 0, "normal")
