import numpy as np
import pytest

from grid_surrogate.dataset import TimeSeriesDataset, read_dataset, write_dataset
from grid_surrogate.errors import ParameterError
from grid_surrogate.perturb import channel_mask, inject_delay, inject_noise


def dataset(n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    ch = rng.normal(size=(n, 36))
    ch /= ch.std(axis=0)  # unit signal power in every channel
    return TimeSeriesDataset(np.arange(n) * 1e-4, ch, 9, "noise", {"dt_out": "0.0001"})


def test_infinite_snr_is_identity():
    ds = dataset(100)
    assert inject_noise(ds, float("inf"), seed=3) == ds


def test_noise_std_follows_snr():
    ds = dataset()
    out = inject_noise(ds, 40.0, seed=1)
    noise = out.channels - ds.channels
    assert np.all(np.abs(noise.std(axis=0) / 0.01 - 1.0) < 0.05)
    # means preserved in expectation
    assert np.all(np.abs(noise.mean(axis=0)) < 3 * 0.01 / np.sqrt(len(ds)))


def test_noise_is_seeded():
    ds = dataset(200)
    assert inject_noise(ds, 20.0, seed=5) == inject_noise(ds, 20.0, seed=5)
    assert inject_noise(ds, 20.0, seed=5) != inject_noise(ds, 20.0, seed=6)


def test_noise_respects_mask_and_labels():
    ds = dataset(200)
    out = inject_noise(ds, 10.0, mask=["V1", "f_DG3"], seed=0)
    changed = np.any(out.channels != ds.channels, axis=0)
    assert changed.tolist() == channel_mask(["V1", "f_DG3"]).tolist()
    assert np.array_equal(out.time, ds.time) and out.scenario_id == ds.scenario_id
    assert out.scenario_label == ds.scenario_label


def test_delay_definition():
    ch = np.zeros((5, 36))
    ch[:, 0] = [1, 2, 3, 4, 5]
    ds = TimeSeriesDataset(np.arange(5) * 1e-3, ch, 10, "comm_delay", {"dt_out": "0.001"})
    out = inject_delay(ds, 3e-3)
    assert out.channels[:, 0].tolist() == [1, 1, 1, 1, 2]
    assert inject_delay(ds, 0.0) == ds
    part = inject_delay(ds, 3e-3, mask=["V2"])
    assert np.array_equal(part.channels[:, 0], ch[:, 0])
    assert np.array_equal(out.time, ds.time)


def test_delay_bounds():
    ds = dataset(100)
    with pytest.raises(ParameterError):
        inject_delay(ds, 100 * 1e-4)
    with pytest.raises(ParameterError):
        inject_delay(ds, -1e-4)


def test_bad_mask():
    with pytest.raises(ParameterError):
        channel_mask(["V4"])
    with pytest.raises(ParameterError):
        channel_mask([True, False])


def test_injectors_commute_with_persistence(tmp_path):
    ds = dataset(50)
    a = inject_noise(ds, 30.0, seed=2)
    write_dataset(a, tmp_path / "a.csv")
    write_dataset(ds, tmp_path / "b.csv")
    b = inject_noise(read_dataset(tmp_path / "b.csv"), 30.0, seed=2)
    assert read_dataset(tmp_path / "a.csv") == b
    write_dataset(inject_delay(ds, 2e-4), tmp_path / "c.csv")
    assert read_dataset(tmp_path / "c.csv") == inject_delay(read_dataset(tmp_path / "b.csv"), 2e-4)
