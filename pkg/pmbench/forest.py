"""Regression trees and their randomized ensembles.

Random forests search the best threshold of every considered feature;
extremely randomized trees draw one uniform threshold per considered feature
and keep the best of those. Rows go left when x[feature] <= threshold.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed

from pmbench.errors import ArgumentError

logger = logging.getLogger(__name__)

LEAF = -1


class SPLIT_MODE:
    BEST = "best_split"
    RANDOM = "random_threshold"
    ALL = [BEST, RANDOM]


@dataclass
class TreeParams:
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    # None considers ceil(p / 3) features per split
    max_features: Optional[int] = None
    mode: str = SPLIT_MODE.BEST

    def validate(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ArgumentError(
                "max_depth must be nonnegative, got {}."
                .format(self.max_depth)
            )
        if self.min_samples_split < 2:
            raise ArgumentError(
                "min_samples_split must be >= 2, got {}."
                .format(self.min_samples_split)
            )
        if self.min_samples_leaf < 1:
            raise ArgumentError(
                "min_samples_leaf must be >= 1, got {}."
                .format(self.min_samples_leaf)
            )
        if self.max_features is not None and self.max_features < 1:
            raise ArgumentError(
                "max_features must be >= 1, got {}."
                .format(self.max_features)
            )
        if self.mode not in SPLIT_MODE.ALL:
            raise ArgumentError(
                "The split mode '{}' is not valid. Please choose between: "
                "{}.".format(self.mode, ", ".join(SPLIT_MODE.ALL))
            )

    def n_considered(self, n_features):
        if self.max_features is None:
            return max(1, math.ceil(n_features / 3))
        return min(self.max_features, n_features)

    def to_dict(self):
        return {
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "mode": self.mode,
        }


@dataclass
class Tree:
    """Flattened node arrays; feature == LEAF marks a leaf."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_leaves(self):
        return int(np.sum(self.feature == LEAF))

    @property
    def max_depth(self):
        return int(np.max(self.depth))

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_dict(cls, args):
        return cls(
            feature=np.asarray(args["feature"], dtype=int),
            threshold=np.asarray(args["threshold"], dtype=float),
            left=np.asarray(args["left"], dtype=int),
            right=np.asarray(args["right"], dtype=int),
            value=np.asarray(args["value"], dtype=float),
            n_samples=np.asarray(args["n_samples"], dtype=int),
            depth=np.asarray(args["depth"], dtype=int),
        )


@dataclass
class Forest:
    trees: List[Tree]
    n_estimators: int
    bootstrap: bool
    seed: int
    params: TreeParams = field(default_factory=TreeParams)

    @property
    def n_parameters(self):
        nodes = sum(t.n_nodes for t in self.trees)
        leaves = sum(t.n_leaves for t in self.trees)
        return nodes * 4 + leaves

    def to_dict(self):
        return {
            "trees": [t.to_dict() for t in self.trees],
            "n_estimators": self.n_estimators,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, args):
        return cls(
            trees=[Tree.from_dict(t) for t in args["trees"]],
            n_estimators=int(args["n_estimators"]),
            bootstrap=bool(args["bootstrap"]),
            seed=int(args["seed"]),
            params=TreeParams(**args["params"]),
        )


def _sse(total, total_sq, count):
    return np.maximum(total_sq - total * total / count, 0.0)


def _best_threshold(x, y, min_leaf):
    """Best midpoint split of one feature by the children's summed squared
    errors. y is centered on the node mean.

    Returns:
        tuple: (impurity, threshold) or None when no valid split exists
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    cum = np.cumsum(ys)
    cum_sq = np.cumsum(ys * ys)
    # Split after position i puts rows 0..i on the left
    left_count = np.arange(1, n)
    valid = (xs[:-1] < xs[1:]) & (left_count >= min_leaf) & \
        (n - left_count >= min_leaf)
    if not np.any(valid):
        return None
    left_sum, left_sq = cum[:-1], cum_sq[:-1]
    right_sum, right_sq = cum[-1] - left_sum, cum_sq[-1] - left_sq
    impurity = _sse(left_sum, left_sq, left_count) + \
        _sse(right_sum, right_sq, n - left_count)
    impurity = np.where(valid, impurity, np.inf)
    # argmin returns the first minimum, i.e. the lowest threshold
    i = int(np.argmin(impurity))
    threshold = 0.5 * (xs[i] + xs[i + 1])
    if threshold >= xs[i + 1]:
        threshold = xs[i]
    return float(impurity[i]), float(threshold)


def _random_threshold(x, y, min_leaf, rng):
    low, high = float(np.min(x)), float(np.max(x))
    # Drawn even for constant features to keep the stream aligned
    threshold = float(rng.uniform(low, high))
    if not high > low:
        return None
    goes_left = x <= threshold
    n_left = int(np.sum(goes_left))
    if n_left < min_leaf or len(x) - n_left < min_leaf:
        return None
    impurity = _sse(np.sum(y[goes_left]), np.sum(y[goes_left] ** 2),
                    n_left) + \
        _sse(np.sum(y[~goes_left]), np.sum(y[~goes_left] ** 2),
             len(x) - n_left)
    return float(impurity), threshold


def _find_split(X, y, params, rng):
    n, p = X.shape
    features = np.sort(rng.choice(p, size=params.n_considered(p),
                                  replace=False))
    best = None
    for f in features:
        if params.mode == SPLIT_MODE.BEST:
            found = _best_threshold(X[:, f], y, params.min_samples_leaf)
        else:
            found = _random_threshold(X[:, f], y, params.min_samples_leaf,
                                      rng)
        if found is None:
            continue
        # Ties keep the lowest feature index, then the lowest threshold
        candidate = (found[0], int(f), found[1])
        if best is None or candidate[0] < best[0]:
            best = candidate
    return best


def fit_tree(X, y, params=None, rng=None) -> Tree:
    params = params or TreeParams()
    params.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ArgumentError(
            "Expected a non-empty 2-D matrix with one target per row."
        )
    rng = rng if rng is not None else np.random.default_rng()

    feature, threshold, left, right = [], [], [], []
    value, n_samples, depth = [], [], []

    def new_node(rows, level):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(np.mean(y[rows])))
        n_samples.append(len(rows))
        depth.append(level)
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y)), 0), np.arange(len(y)), 0)]
    while stack:
        node, rows, level = stack.pop()
        n = len(rows)
        if (params.max_depth is not None and level >= params.max_depth) or \
                n < params.min_samples_split or \
                n < 2 * params.min_samples_leaf:
            continue
        targets = y[rows] - value[node]
        parent_sse = float(np.sum(targets * targets))
        if parent_sse <= 0.0:
            continue
        split = _find_split(X[rows], targets, params, rng)
        if split is None or not split[0] < parent_sse:
            continue

        _, f, thr = split
        goes_left = X[rows, f] <= thr
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(left_rows, level + 1)
        right[node] = new_node(right_rows, level + 1)
        stack.append((right[node], right_rows, level + 1))
        stack.append((left[node], left_rows, level + 1))

    return Tree(
        feature=np.asarray(feature, dtype=int),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=int),
        right=np.asarray(right, dtype=int),
        value=np.asarray(value, dtype=float),
        n_samples=np.asarray(n_samples, dtype=int),
        depth=np.asarray(depth, dtype=int),
    )


def predict_tree(tree, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    node = np.zeros(X.shape[0], dtype=int)
    active = tree.feature[node] != LEAF
    while np.any(active):
        idx = np.flatnonzero(active)
        current = node[idx]
        goes_left = X[idx, tree.feature[current]] <= tree.threshold[current]
        node[idx] = np.where(goes_left, tree.left[current],
                             tree.right[current])
        active = tree.feature[node] != LEAF
    out = tree.value[node]
    return out[0] if single else out


def tree_rng(seed, index):
    """Generator stream of one ensemble member."""
    return np.random.default_rng([int(seed), int(index)])


def _fit_member(X, y, params, bootstrap, seed, index):
    rng = tree_rng(seed, index)
    if bootstrap:
        rows = rng.integers(0, X.shape[0], X.shape[0])
        return fit_tree(X[rows], y[rows], params, rng)
    return fit_tree(X, y, params, rng)


def fit_ensemble(X, y, tree_params=None, n_estimators=100, bootstrap=True,
                 seed=0, n_jobs=1) -> Forest:
    tree_params = tree_params or TreeParams()
    tree_params.validate()
    if n_estimators < 1:
        raise ArgumentError(
            "An ensemble needs at least one tree, got {}."
            .format(n_estimators)
        )
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    trees = Parallel(n_jobs=n_jobs)(
        delayed(_fit_member)(X, y, tree_params, bootstrap, seed, index)
        for index in range(n_estimators)
    )
    logger.debug(
        "Fitted %d trees (%s, bootstrap=%s)",
        n_estimators, tree_params.mode, bootstrap
    )
    return Forest(
        trees=list(trees),
        n_estimators=n_estimators,
        bootstrap=bootstrap,
        seed=seed,
        params=tree_params,
    )


def predict_forest(forest, X):
    X = np.asarray(X, dtype=float)
    width = X.shape[-1]
    for tree in forest.trees:
        inner = tree.feature[tree.feature != LEAF]
        if len(inner) and inner.max() >= width:
            raise ArgumentError(
                "The query has {} features but the forest splits on "
                "feature {}.".format(width, int(inner.max()))
            )
    total = sum(predict_tree(tree, X) for tree in forest.trees)
    return total / len(forest.trees)
