"""Regression trees grown leaf-wise on binned features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .histogram import BinMapper

# A split must remove more than this fraction of the node's residual sum of
# squares; keeps round-off from producing zero-gain splits.
REL_GAIN_FLOOR = 1e-12


@dataclass
class RegressionTree:
    """Flat array tree.  Leaves have ``feature == -1``; node 0 is the root."""

    feature: np.ndarray  # int64
    bin_threshold: np.ndarray  # int64, go left when bin <= threshold
    threshold: np.ndarray  # float, go left when x <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf output (zero on internal nodes)
    count: np.ndarray  # training samples reaching the node
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def leaf_counts(self) -> np.ndarray:
        return self.count[self.feature < 0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        out = np.zeros(x.shape[0])
        _kernels.accumulate_ensemble(x, np.array([0, self.n_nodes], dtype=np.int64), self.feature,
                                     self.threshold, self.left, self.right, self.value, 1.0, out)
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in _FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(**{k: np.asarray(d[k], dtype=float if k in ("threshold", "value") else np.int64)
                      for k in _FIELDS})


_FIELDS = ("feature", "bin_threshold", "threshold", "left", "right", "value", "count", "depth")


@dataclass(frozen=True)
class Split:
    feature: int
    bin: int
    threshold: float
    gain: float


def find_best_split(binned: np.ndarray, rows: np.ndarray, residuals: np.ndarray, features: np.ndarray,
                    mapper: BinMapper, min_child_samples: int = 20, hist=None) -> Split | None:
    """Best squared-error split of the node holding ``rows``, or None.

    Gain is SSE(parent) - SSE(left) - SSE(right), which under squared loss is
    S_L^2/n_L + S_R^2/n_R - S^2/n.  Ties go to the lowest feature index and
    then the lowest threshold.  ``hist`` may carry a precomputed (sums, counts)
    pair for ``features``.
    """
    features = np.asarray(features, dtype=np.int64)
    if rows.size < 2 * min_child_samples or features.size == 0:
        return None
    if hist is None:
        hist = _kernels.node_histogram(binned, rows, residuals, features, mapper.n_bins + 1)
    sums, counts = hist
    r = residuals[rows]
    ss = float(np.dot(r, r))
    if ss == 0.0:
        return None
    floor = REL_GAIN_FLOOR * ss
    nbins = mapper.bins_per_feature[features]
    row, b, gain = _kernels.best_split(sums, counts, nbins, max(min_child_samples, 1), floor)
    if row < 0 or not gain > 0:
        return None
    f = int(features[row])
    return Split(f, int(b), float(mapper.edges[f][b]), float(gain))


@dataclass
class _Leaf:
    node: int
    rows: np.ndarray
    depth: int
    hist: tuple
    split: Split | None


def grow_tree(binned: np.ndarray, rows: np.ndarray, residuals: np.ndarray, features: np.ndarray,
              mapper: BinMapper, num_leaves: int = 31, max_depth: int | None = 6,
              min_child_samples: int = 20) -> RegressionTree:
    """Best-first growth: keep splitting the frontier leaf with the largest gain.

    Stops at ``num_leaves`` leaves or when no frontier leaf has an admissible
    split.  Leaves predict the mean residual of their rows.  A child's
    histogram is obtained from its parent's minus its sibling's, so only the
    smaller child is scanned.
    """
    rows = np.asarray(rows, dtype=np.int64)
    features = np.asarray(features, dtype=np.int64)
    features = features[mapper.splittable[features]]
    residuals = np.ascontiguousarray(residuals, dtype=float)
    depth_cap = np.inf if max_depth is None or max_depth < 0 else max_depth
    nb = mapper.n_bins + 1

    nodes: list[list] = []  # [feature, bin, threshold, left, right, value, count, depth]

    def new_node(node_rows, depth):
        val = float(residuals[node_rows].mean()) if node_rows.size else 0.0
        nodes.append([-1, -1, 0.0, -1, -1, val, int(node_rows.size), depth])
        return len(nodes) - 1

    def make_leaf(node, node_rows, depth, hist):
        split = None
        if depth < depth_cap:
            split = find_best_split(binned, node_rows, residuals, features, mapper, min_child_samples, hist)
        return _Leaf(node, node_rows, depth, hist, split)

    root_hist = _kernels.node_histogram(binned, rows, residuals, features, nb) if features.size else None
    frontier = [make_leaf(new_node(rows, 0), rows, 0, root_hist)]
    n_leaves = 1
    while n_leaves < num_leaves:
        best = None
        for i, leaf in enumerate(frontier):
            if leaf.split is not None and (best is None or leaf.split.gain > frontier[best].split.gain):
                best = i
        if best is None:
            break
        leaf = frontier.pop(best)
        s = leaf.split
        go_left = binned[leaf.rows, s.feature] <= s.bin
        lrows, rrows = leaf.rows[go_left], leaf.rows[~go_left]
        small, large = (lrows, rrows) if lrows.size <= rrows.size else (rrows, lrows)
        h_small = _kernels.node_histogram(binned, small, residuals, features, nb)
        h_large = (leaf.hist[0] - h_small[0], leaf.hist[1] - h_small[1])
        lhist, rhist = (h_small, h_large) if small is lrows else (h_large, h_small)
        d = leaf.depth + 1
        li = new_node(lrows, d)
        ri = new_node(rrows, d)
        nodes[leaf.node][:5] = [s.feature, s.bin, s.threshold, li, ri]
        nodes[leaf.node][5] = 0.0
        frontier.append(make_leaf(li, lrows, d, lhist))
        frontier.append(make_leaf(ri, rrows, d, rhist))
        n_leaves += 1

    cols = list(zip(*nodes))
    return RegressionTree(
        feature=np.array(cols[0], dtype=np.int64),
        bin_threshold=np.array(cols[1], dtype=np.int64),
        threshold=np.array(cols[2], dtype=float),
        left=np.array(cols[3], dtype=np.int64),
        right=np.array(cols[4], dtype=np.int64),
        value=np.array(cols[5], dtype=float),
        count=np.array(cols[6], dtype=np.int64),
        depth=np.array(cols[7], dtype=np.int64),
    )
