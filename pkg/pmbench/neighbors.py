"""Exact k-nearest-neighbor regression.

Neighbors are ordered by (euclidean distance, feature values
lexicographically, label), which makes predictions independent of the
training row order. The kd-tree path only narrows the candidate set; the
final selection always runs on exactly recomputed distances, so both paths
agree bit for bit.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from pmbench.errors import ArgumentError

logger = logging.getLogger(__name__)


class WEIGHTING:
    UNIFORM = "uniform"
    DISTANCE = "distance"
    ALL = [UNIFORM, DISTANCE]


class ALGORITHM:
    AUTO = "auto"
    BRUTE = "brute"
    KD_TREE = "kd_tree"
    ALL = [AUTO, BRUTE, KD_TREE]
    # kd-trees stop paying off beyond a couple dozen dimensions
    KD_TREE_MAX_DIMENSIONS = 20


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int
    weighting: str = WEIGHTING.UNIFORM
    algorithm: str = ALGORITHM.AUTO
    _tree: Optional[cKDTree] = field(default=None, repr=False)

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def n_parameters(self):
        n, p = self.X.shape
        return n * (p + 1)

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.X)
        return self._tree

    def uses_tree(self):
        if self.algorithm == ALGORITHM.AUTO:
            return self.n_features <= ALGORITHM.KD_TREE_MAX_DIMENSIONS
        return self.algorithm == ALGORITHM.KD_TREE

    def to_dict(self):
        return {
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "k": self.k,
            "weighting": self.weighting,
            "algorithm": self.algorithm,
        }

    @classmethod
    def from_dict(cls, args):
        return fit_knn(
            np.asarray(args["X"], dtype=float),
            np.asarray(args["y"], dtype=float),
            int(args["k"]),
            args.get("weighting", WEIGHTING.UNIFORM),
            args.get("algorithm", ALGORITHM.AUTO),
        )


def fit_knn(X, y, k, weighting=WEIGHTING.UNIFORM,
            algorithm=ALGORITHM.AUTO) -> KnnModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ArgumentError(
            "Expected a 2-D matrix with one label per row."
        )
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ArgumentError("Training data must be finite.")
    if not 1 <= k <= X.shape[0]:
        raise ArgumentError(
            "The number of neighbors must lie in [1, {}], got {}."
            .format(X.shape[0], k)
        )
    if weighting not in WEIGHTING.ALL:
        raise ArgumentError(
            "The weighting '{}' is not valid. Please choose between: {}."
            .format(weighting, ", ".join(WEIGHTING.ALL))
        )
    if algorithm not in ALGORITHM.ALL:
        raise ArgumentError(
            "The search algorithm '{}' is not valid.".format(algorithm)
        )
    return KnnModel(X=X.copy(), y=y.copy(), k=int(k), weighting=weighting,
                    algorithm=algorithm)


def _select(model, query, candidates):
    """Pick the k best candidates under the deterministic neighbor order.

    Returns:
        tuple: Row indices and their distances, closest first
    """
    rows = model.X[candidates]
    distances = np.sqrt(np.sum((rows - query) ** 2, axis=1))
    # np.lexsort sorts by the last key first
    keys = [model.y[candidates]]
    keys += [rows[:, j] for j in range(rows.shape[1] - 1, -1, -1)]
    keys.append(distances)
    order = np.lexsort(keys)[:model.k]
    return candidates[order], distances[order]


def _candidates_brute(model, query):
    distances = np.sqrt(np.sum((model.X - query) ** 2, axis=1))
    kth = np.partition(distances, model.k - 1)[model.k - 1]
    return np.flatnonzero(distances <= kth)


def _candidates_tree(model, query):
    distances, _ = model.tree.query(query, k=model.k)
    kth = float(np.max(np.atleast_1d(distances)))
    # Superset of every row tied with the k-th neighbor
    radius = kth * (1 + 1e-9) + 1e-12
    return np.asarray(
        sorted(model.tree.query_ball_point(query, radius)), dtype=int
    )


def neighbors(model, x, algorithm=None):
    """Indices and distances of the k nearest training rows of x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,):
        raise ArgumentError(
            "The query needs {} features, got shape {}."
            .format(model.n_features, x.shape)
        )
    use_tree = model.uses_tree() if algorithm is None \
        else algorithm == ALGORITHM.KD_TREE
    if use_tree:
        candidates = _candidates_tree(model, x)
    else:
        candidates = _candidates_brute(model, x)
    return _select(model, x, candidates)


def predict_knn(model, x, algorithm=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return np.array([predict_knn(model, row, algorithm) for row in x])

    index, distances = neighbors(model, x, algorithm)
    labels = model.y[index]
    if model.weighting == WEIGHTING.UNIFORM:
        return float(np.mean(labels))
    exact = distances == 0
    if np.any(exact):
        return float(np.mean(labels[exact]))
    weights = 1.0 / distances
    return float(np.sum(weights * labels) / np.sum(weights))
