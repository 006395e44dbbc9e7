"""Random forest of Gini CART trees; probability is the mean of tree leaf fractions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import SingleClassTraining


@dataclass(frozen=True)
class RfConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # None: floor(sqrt(n_features))
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be >= 1")


@dataclass
class Tree:
    """Flat binary tree.  Leaves have ``feature == -1``; ``value`` is the class-1 fraction."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=int),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=int),
            np.asarray(d["right"], dtype=int),
            np.asarray(d["value"], dtype=float),
        )


def _best_split_on_feature(x, y, min_leaf):
    """Lowest weighted Gini over thresholds between distinct sorted values.

    Returns ``(impurity, threshold)`` or ``None`` when no admissible split exists.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    m = xs.size
    n_left = np.arange(1, m)
    ones_left = np.cumsum(ys)[:-1]
    ones_total = ys.sum()
    n_right = m - n_left
    ones_right = ones_total - ones_left
    ok = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not ok.any():
        return None
    pl = ones_left / n_left
    pr = ones_right / n_right
    gini = (n_left * 2 * pl * (1 - pl) + n_right * 2 * pr * (1 - pr)) / m
    gini = np.where(ok, gini, np.inf)
    k = int(np.argmin(gini))
    thr = 0.5 * (xs[k] + xs[k + 1])
    if thr >= xs[k + 1]:
        thr = xs[k]
    return float(gini[k]), float(thr)


def grow_tree(X, y, config: RfConfig, rng: np.random.Generator, max_features: int) -> Tree:
    """Grow one CART tree to purity (or ``min_leaf`` / ``max_depth``)."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    n_features = X.shape[1]
    root_idx = np.arange(X.shape[0])
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        p = value[node]
        if p in (0.0, 1.0) or idx.size < 2 * config.min_leaf:
            continue
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        best = None
        visited = 0
        for f in rng.permutation(n_features):
            if visited >= max_features:
                break
            col = X[idx, f]
            if col.max() == col.min():
                continue
            visited += 1
            cand = _best_split_on_feature(col, y[idx], config.min_leaf)
            if cand is not None and (best is None or cand[0] < best[0]):
                best = (cand[0], cand[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.asarray(feature, dtype=int),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=int),
        np.asarray(right, dtype=int),
        np.asarray(value, dtype=float),
    )


def fit_forest_arrays(X, labels, config: RfConfig) -> list[Tree]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(labels, dtype=float)
    if np.unique(y).size < 2:
        raise SingleClassTraining("random forest training needs both classes")
    n, p = X.shape
    max_features = config.features_per_split or max(1, math.isqrt(p))
    max_features = min(max_features, p)
    trees = []
    for t in range(config.n_trees):
        # one independent stream per tree keeps results schedule-independent
        rng = np.random.default_rng([config.seed, t])
        idx = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        trees.append(grow_tree(X[idx], y[idx], config, rng, max_features))
    return trees


def forest_proba(trees, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    total = np.zeros(X.shape[0])
    for tree in trees:
        total += tree.predict_proba(X)
    return total / len(trees)
