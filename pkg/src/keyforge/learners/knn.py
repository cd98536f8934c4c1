"""k-nearest-neighbor classifier with Minkowski distances (p = 1, 2, 3).

Neighbor search is a compiled scan that keeps the k best per query, so no
n_test x n_train distance matrix is ever materialized. Ties in distance keep
the lower training index, matching a stable sort over (distance, index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from ..dataset import Dataset
from ..errors import ConfigError, FitError


@dataclass(frozen=True)
class KnnConfig:
    n_neighbors: int = 5
    weight: str = "distance"  # "uniform" or "distance"
    p: int = 1  # Minkowski exponent, one of 1, 2, 3

    def validate(self) -> None:
        if self.n_neighbors < 1:
            raise ConfigError("n_neighbors must be >= 1, got %d" % self.n_neighbors)
        if self.weight not in ("uniform", "distance"):
            raise ConfigError("weight must be 'uniform' or 'distance', got %r" % self.weight)
        if self.p not in (1, 2, 3):
            raise ConfigError("p must be 1, 2 or 3, got %r" % self.p)


@njit(cache=True, parallel=True, nogil=True)
def _nearest(train: np.ndarray, queries: np.ndarray, k: int, p: int):
    n_train = train.shape[0]
    n_feat = train.shape[1]
    n_q = queries.shape[0]
    nn_idx = np.empty((n_q, k), dtype=np.int64)
    nn_dist = np.empty((n_q, k), dtype=np.float64)
    for q in prange(n_q):
        best_d = np.full(k, np.inf)
        best_i = np.full(k, -1, dtype=np.int64)
        for j in range(n_train):
            s = 0.0
            if p == 1:
                for f in range(n_feat):
                    s += abs(queries[q, f] - train[j, f])
            elif p == 2:
                for f in range(n_feat):
                    d = queries[q, f] - train[j, f]
                    s += d * d
            else:
                for f in range(n_feat):
                    d = abs(queries[q, f] - train[j, f])
                    s += d * d * d
            # strict < keeps the earliest index on exact ties
            if s < best_d[k - 1]:
                pos = k - 1
                while pos > 0 and best_d[pos - 1] > s:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = s
                best_i[pos] = j
        for t in range(k):
            nn_idx[q, t] = best_i[t]
            if p == 2:
                nn_dist[q, t] = np.sqrt(best_d[t])
            elif p == 3:
                nn_dist[q, t] = best_d[t] ** (1.0 / 3.0)
            else:
                nn_dist[q, t] = best_d[t]
    return nn_idx, nn_dist


class KnnModel:
    family = "knn"

    def __init__(self, config: KnnConfig, classes: tuple[str, ...], train_x: np.ndarray, train_y: np.ndarray):
        self.config = config
        self.classes = tuple(classes)
        self._x = np.ascontiguousarray(train_x, dtype=np.float64)
        self._y = np.asarray(train_y, dtype=np.int64)

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = np.ascontiguousarray(np.atleast_2d(rows), dtype=np.float64)
        if rows.shape[1] != self._x.shape[1]:
            raise ValueError("query width %d != training width %d" % (rows.shape[1], self._x.shape[1]))
        k = self.config.n_neighbors
        idx, dist = _nearest(self._x, rows, k, self.config.p)
        n_classes = len(self.classes)
        out = np.zeros((rows.shape[0], n_classes))
        labels = self._y[idx]
        if self.config.weight == "uniform":
            for q in range(rows.shape[0]):
                out[q] = np.bincount(labels[q], minlength=n_classes)
        else:
            for q in range(rows.shape[0]):
                zero = dist[q] == 0.0
                if zero.any():
                    # exact matches dominate: all mass on the matched labels
                    out[q] = np.bincount(labels[q][zero], minlength=n_classes)
                else:
                    out[q] = np.bincount(labels[q], weights=1.0 / dist[q], minlength=n_classes)
        return out / out.sum(axis=1, keepdims=True)

    def _arrays(self) -> dict:
        return {"train_x": self._x, "train_y": self._y}

    @classmethod
    def _from_state(cls, meta: dict, arrays: dict) -> "KnnModel":
        return cls(KnnConfig(**meta["config"]), tuple(meta["classes"]), arrays["train_x"], arrays["train_y"])


def fit(train: Dataset, cfg: KnnConfig) -> KnnModel:
    """Store the training table; k-NN defers all work to prediction time."""
    cfg.validate()
    if len(train) == 0:
        raise FitError("k-NN needs a non-empty training set")
    if cfg.n_neighbors > len(train):
        raise ConfigError("n_neighbors=%d exceeds training size %d" % (cfg.n_neighbors, len(train)))
    return KnnModel(cfg, train.roster, train.features, train.label_indices())
