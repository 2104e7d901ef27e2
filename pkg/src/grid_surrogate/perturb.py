"""Measurement-level perturbations: additive sensor noise and communication delay."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .dataset import TimeSeriesDataset
from .errors import ParameterError
from .simulator import CHANNELS, N_CHANNELS


def channel_mask(mask: Sequence[str] | Sequence[bool] | np.ndarray | None) -> np.ndarray:
    """Normalise a channel selection (names or booleans, None = all) to a bool vector."""
    if mask is None:
        return np.ones(N_CHANNELS, dtype=bool)
    mask = list(mask)
    if mask and isinstance(mask[0], str):
        unknown = set(mask) - set(CHANNELS)
        if unknown:
            raise ParameterError("channel_mask", f"unknown channels {sorted(unknown)}")
        return np.array([c in mask for c in CHANNELS])
    out = np.asarray(mask, dtype=bool)
    if out.shape != (N_CHANNELS,):
        raise ParameterError("channel_mask", f"expected {N_CHANNELS} flags, got {out.shape}")
    return out


def inject_noise(ds: TimeSeriesDataset, snr_db: float, mask=None, seed=0) -> TimeSeriesDataset:
    """Add zero-mean Gaussian noise at the given signal-to-noise ratio.

    Signal power is the channel's variance over the run, so slowly varying
    channels with a large offset (frequency, power) are not swamped by noise
    scaled to their DC level.
    """
    sel = channel_mask(mask)
    out = ds.channels.copy()
    if math.isinf(snr_db) and snr_db > 0:
        return ds.with_channels(out)
    if not math.isfinite(snr_db):
        raise ParameterError("snr_db", "must be finite or +inf")
    rng = np.random.default_rng(seed)
    power = np.var(ds.channels, axis=0)
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    noise = rng.standard_normal(out.shape)
    cols = np.flatnonzero(sel)
    out[:, cols] += noise[:, cols] * sigma[cols]
    return ds.with_channels(out)


def inject_delay(ds: TimeSeriesDataset, delay: float, mask=None) -> TimeSeriesDataset:
    """Shift masked channels back in time by ``round(delay / dt_out)`` samples.

    The first samples repeat the initial value; unmasked channels, time and
    labels are untouched.
    """
    sel = channel_mask(mask)
    dt = ds.dt_out
    duration = len(ds) * dt
    if not (0 <= delay < duration):
        raise ParameterError("delay", f"must lie in [0, {duration}), got {delay!r}")
    shift = int(round(delay / dt))
    out = ds.channels.copy()
    if shift == 0:
        return ds.with_channels(out)
    cols = np.flatnonzero(sel)
    src = ds.channels[:, cols]
    out[shift:, cols] = src[:-shift]
    out[:shift, cols] = src[0]
    return ds.with_channels(out)
