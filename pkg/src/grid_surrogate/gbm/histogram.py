"""Quantile binning of feature columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError

MAX_BINS = 256


@dataclass
class BinMapper:
    """Per-feature bin edges.

    A value ``x`` of feature ``j`` falls in bin ``k`` = number of edges strictly
    below ``x``, so ``bin <= k`` is the same test as ``x <= edges[j][k]``.
    That identity lets a tree trained on bins be evaluated on raw values.
    """

    edges: list[np.ndarray]
    n_bins: int

    @property
    def n_features(self) -> int:
        return len(self.edges)

    @property
    def bins_per_feature(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    @property
    def splittable(self) -> np.ndarray:
        return self.bins_per_feature > 1

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape, dtype=np.uint8)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, x[:, j], side="left")
        return out


def feature_edges(column: np.ndarray, n_bins: int) -> np.ndarray:
    values = np.unique(column)
    if values.size <= 1:
        return np.empty(0)
    if values.size <= n_bins:
        edges = 0.5 * (values[:-1] + values[1:])
    else:
        qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
        edges = np.quantile(column, qs)
        # drop edges at or above the maximum: they would leave an empty top bin
        edges = edges[edges < values[-1]]
    return np.unique(edges)


def fit_bins(x: np.ndarray, n_bins: int = 255) -> BinMapper:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ParameterError("features", f"expected a non-empty N x F matrix, got shape {x.shape}")
    if not 2 <= n_bins <= MAX_BINS:
        raise ParameterError("n_bins", f"must lie in [2, {MAX_BINS}], got {n_bins}")
    return BinMapper([feature_edges(x[:, j], n_bins) for j in range(x.shape[1])], n_bins)


def build_histograms(x: np.ndarray, n_bins: int = 255) -> tuple[BinMapper, np.ndarray]:
    """Bin every feature by quantiles; returns the mapper and the N x F uint8 bin matrix."""
    mapper = fit_bins(x, n_bins)
    return mapper, mapper.transform(x)
