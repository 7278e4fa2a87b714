"""Random-forest regression surrogate in the style of SMAC.

Trees are stored as flat arrays so prediction walks all queries through a
tree at once. Uncertainty is the spread of per-tree means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from llana.predictive import PredictiveDistribution
from llana.space import SizeError

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat binary tree; ``feature[i] == -1`` marks a leaf.

    Internal node ``i`` sends ``x`` left when ``x[feature[i]] <= threshold[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index for each row of ``x``."""
        node = np.zeros(x.shape[0], dtype=np.intp)
        rows = np.arange(x.shape[0])
        active = self.feature[node] >= 0
        while np.any(active):
            idx = rows[active]
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    n_trees: int
    min_samples_leaf: int
    seed: int
    dimension: int


def _best_split(x: np.ndarray, y: np.ndarray, dims: np.ndarray, min_leaf: int):
    """Lowest summed child SSE over ``dims``; None when no split is admissible."""
    n = y.size
    best = None
    for f in dims:
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        n_left = np.arange(1, n)
        sum_l, sq_l = csum[:-1], csq[:-1]
        sum_r, sq_r = csum[-1] - sum_l, csq[-1] - sq_l
        n_right = n - n_left
        sse = (sq_l - sum_l**2 / n_left) + (sq_r - sum_r**2 / n_right)
        ok = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not np.any(ok):
            continue
        cand = np.flatnonzero(ok)
        i = cand[np.argmin(sse[cand])]
        if best is None or sse[i] < best[0]:
            best = (sse[i], int(f), 0.5 * (xs[i] + xs[i + 1]))
    return best


def _build_tree(x: np.ndarray, y: np.ndarray, rng: np.random.Generator, min_leaf: int, n_dims: int) -> Tree:
    feature, threshold, left, right, value, counts = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[idx])))
        counts.append(idx.size)
        return len(feature) - 1

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size))]
    d = x.shape[1]
    while stack:
        node, idx = stack.pop()
        yi = y[idx]
        if idx.size < 2 * min_leaf or np.ptp(yi) == 0.0:
            continue
        dims = rng.choice(d, size=n_dims, replace=False)
        split = _best_split(x[idx], yi, dims, min_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = x[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value, dtype=float),
        np.array(counts, dtype=np.intp),
    )


def forest_fit(x, y, n_trees: int = 64, min_samples_leaf: int = 3, seed: int = 0) -> ForestModel:
    """Fit ``n_trees`` regression trees on bootstrap resamples.

    Tree ``t`` draws its bootstrap and its per-node candidate dimensions
    (``ceil(d/2)`` of them) from a generator seeded with ``seed + t``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise SizeError("cannot fit a forest on an empty training set")
    if x.shape[0] != y.size:
        raise ValueError(f"{x.shape[0]} inputs but {y.size} targets")
    if n_trees < 1 or min_samples_leaf < 1:
        raise ValueError("n_trees and min_samples_leaf must be >= 1")
    n, d = x.shape
    n_dims = math.ceil(d / 2)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(seed + t)
        boot = rng.integers(n, size=n)
        trees.append(_build_tree(x[boot], y[boot], rng, min_samples_leaf, n_dims))
    return ForestModel(tuple(trees), n_trees, min_samples_leaf, seed, d)


def per_tree_means(model: ForestModel, queries) -> np.ndarray:
    """(n_trees, m) matrix of leaf means."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    if q.shape[1] != model.dimension:
        raise ValueError(f"query dimension {q.shape[1]} != model dimension {model.dimension}")
    return np.vstack([t.value[t.apply(q)] for t in model.trees])


def forest_predict_many(model: ForestModel, queries) -> tuple[np.ndarray, np.ndarray]:
    means = per_tree_means(model, queries)
    var = np.maximum(np.var(means, axis=0), VARIANCE_FLOOR)
    return np.mean(means, axis=0), np.sqrt(var)


def forest_predict(model: ForestModel, query) -> PredictiveDistribution:
    mean, std = forest_predict_many(model, np.asarray(query, dtype=float)[None, :])
    return PredictiveDistribution(float(mean[0]), float(std[0]))
