"""Compiled inner loops for histogram boosting."""

import numpy as np
from numba import njit

TIE_RTOL = 1e-10


@njit(cache=True)
def node_histogram(binned, rows, grad, feats, n_bins):
    nf = feats.shape[0]
    sums = np.zeros((nf, n_bins))
    counts = np.zeros((nf, n_bins), dtype=np.int64)
    for r in rows:
        g = grad[r]
        for j in range(nf):
            b = binned[r, feats[j]]
            sums[j, b] += g
            counts[j, b] += 1
    return sums, counts


@njit(cache=True)
def best_split(sums, counts, n_bins_per_feat, min_child, min_gain):
    """Scan every bin boundary of every feature row of the histogram.

    Returns (row, bin, gain) of the largest squared-error reduction, or
    row = -1 when nothing beats ``min_gain``.  Rows are scanned in order and a
    candidate must beat the incumbent by more than a relative ``TIE_RTOL``, so
    ties (including ones blurred by summation order) go to the lowest feature
    row and then the lowest bin.
    """
    nf = sums.shape[0]
    best_row = -1
    best_bin = -1
    best_gain = min_gain
    for j in range(nf):
        total_s = 0.0
        total_c = 0
        nb = n_bins_per_feat[j]
        for b in range(nb):
            total_s += sums[j, b]
            total_c += counts[j, b]
        parent = total_s * total_s / total_c
        left_s = 0.0
        left_c = 0
        for b in range(nb - 1):
            left_s += sums[j, b]
            left_c += counts[j, b]
            right_c = total_c - left_c
            if left_c < min_child:
                continue
            if right_c < min_child:
                break
            right_s = total_s - left_s
            gain = left_s * left_s / left_c + right_s * right_s / right_c - parent
            if gain > best_gain and (best_row < 0 or gain - best_gain > TIE_RTOL * abs(best_gain)):
                best_gain = gain
                best_row = j
                best_bin = b
    return best_row, best_bin, best_gain


@njit(cache=True)
def accumulate_binned(binned, feature, bin_threshold, left, right, value, scale, out):
    for i in range(binned.shape[0]):
        node = 0
        while feature[node] >= 0:
            if binned[i, feature[node]] <= bin_threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += scale * value[node]


@njit(cache=True)
def accumulate_ensemble(x, offsets, feature, threshold, left, right, value, scale, out):
    """Add ``scale * tree(x)`` for every tree in order; child indices are tree-local."""
    n_trees = offsets.shape[0] - 1
    for t in range(n_trees):
        base = offsets[t]
        for i in range(x.shape[0]):
            node = 0
            while feature[base + node] >= 0:
                k = base + node
                if x[i, feature[k]] <= threshold[k]:
                    node = left[k]
                else:
                    node = right[k]
            out[i] += scale * value[base + node]
