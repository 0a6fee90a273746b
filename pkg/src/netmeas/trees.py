"""Regression trees and random forests.

Trees grow greedily by variance reduction over axis-aligned thresholds placed
at midpoints between consecutive distinct feature values.  Among equally good
splits the lowest feature index wins, then the lowest threshold.  A node is
split whenever its targets are not constant, a split respecting ``min_leaf``
exists and ``max_depth`` allows it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DataError, ParameterError
from .uncertain import RandomStream

# splits whose child SSE differ by less than this fraction of the node SSE tie
_TIE_RTOL = 1e-12


class RegressionTree:
    """Fitted tree stored as flat node arrays; ``feature == -1`` marks a leaf."""

    family = "tree"

    def __init__(self, feature, threshold, left, right, value, n_features):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_features = int(n_features)

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def n_leaves(self):
        return int(np.count_nonzero(self.feature < 0))

    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            go_left = X[rows[inner], feat[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])
        return self.value[node]

    def to_dict(self):
        return {
            "family": self.family,
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"], d["n_features"])


def _best_split(X, y, features, min_leaf):
    """Return ``(sse, feature, threshold)`` of the best split or ``None``."""
    n = y.size
    order = np.argsort(X[:, features], axis=0, kind="stable")
    xs = np.take_along_axis(X[:, features], order, axis=0)
    ys = (y - y.mean())[order]
    csum = np.cumsum(ys, axis=0)
    csq = np.cumsum(ys * ys, axis=0)
    tot, tot_sq = csum[-1], csq[-1]
    nl = np.arange(1, n)[:, None]
    nr = n - nl
    sl, ql = csum[:-1], csq[:-1]
    sse = (ql - sl * sl / nl) + ((tot_sq - ql) - (tot - sl) ** 2 / nr)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    sse = np.where(valid, sse, np.inf)
    tie = _TIE_RTOL * float(tot_sq[0])
    best = None
    for j, f in enumerate(features):
        col = sse[:, j]
        m = float(np.min(col))
        if not np.isfinite(m):
            continue
        i = int(np.argmax(col <= m + tie))  # lowest threshold within rounding of the minimum
        if best is None or col[i] < best[0] - tie:
            thr = 0.5 * (xs[i, j] + xs[i + 1, j])
            best = (float(col[i]), int(f), float(thr))
    return best


def fit_tree(X, y, max_depth=None, min_leaf=1, *, feature_fraction=1.0, rng=None):
    """Grow a regression tree.

    Parameters
    ----------
    X : (n, d) array_like
    y : (n,) array_like
    max_depth : int or None
        ``None`` grows until leaves are pure or cannot be split.
    min_leaf : int
        Minimum number of samples in each child.
    feature_fraction : float
        Fraction of features examined at each split (random subset drawn
        from ``rng``); ``1.0`` examines all.
    rng : numpy.random.Generator, optional
        Required when ``feature_fraction < 1``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot fit a tree on empty data")
    if X.shape[0] != y.size:
        raise DataError("feature and target row counts differ")
    if int(min_leaf) < 1:
        raise ParameterError("min_leaf must be at least 1")
    if max_depth is not None and int(max_depth) < 1:
        raise ParameterError("max_depth must be at least 1")
    if not 0 < feature_fraction <= 1:
        raise ParameterError("feature_fraction must lie in (0, 1]")
    d = X.shape[1]
    n_try = max(1, int(round(feature_fraction * d)))
    if n_try < d and rng is None:
        raise ParameterError("feature subsampling requires a random generator")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(v):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(v)
        return len(value) - 1

    root = new_node(float(np.mean(y)))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yy = y[idx]
        if (max_depth is not None and depth >= max_depth) or idx.size < 2 * min_leaf or np.all(yy == yy[0]):
            continue
        if n_try < d:
            feats = np.sort(rng.choice(d, size=n_try, replace=False))
        else:
            feats = np.arange(d)
        split = _best_split(X[idx], yy, feats, min_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(float(np.mean(y[li])))
        right[node] = new_node(float(np.mean(y[ri])))
        # push right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return RegressionTree(feature, threshold, left, right, value, d)


class RandomForest:
    family = "forest"

    def __init__(self, trees, n_features):
        self.trees = list(trees)
        self.n_features = int(n_features)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)

    def to_dict(self):
        return {"family": self.family, "n_features": self.n_features, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls([RegressionTree.from_dict(t) for t in d["trees"]], d["n_features"])


def fit_forest(X, y, n_trees=100, max_depth=None, min_leaf=1, feature_fraction=1 / 3,
               stream: RandomStream | None = None, *, bootstrap=True, workers=None):
    """Bagged ensemble of trees with per-split feature subsampling.

    Tree ``i`` draws its bootstrap sample and feature subsets from
    ``stream.child(i)``, so concurrent fitting (``workers > 1``) reproduces
    the sequential result exactly.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if int(n_trees) < 1:
        raise ParameterError("n_trees must be at least 1")
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot fit a forest on empty data")
    if stream is None:
        if bootstrap or feature_fraction < 1:
            raise ParameterError("a RandomStream is required for bootstrap or feature subsampling")
        stream = RandomStream(0)
    n = y.size

    def grow(i):
        rng = stream.child(i).generator()
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        return fit_tree(X[idx], y[idx], max_depth, min_leaf, feature_fraction=feature_fraction, rng=rng)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(grow, range(int(n_trees))))
    else:
        trees = [grow(i) for i in range(int(n_trees))]
    return RandomForest(trees, X.shape[1])
