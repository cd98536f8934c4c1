"""Gradient-boosted trees with a softmax link: one tree per class per round.

Each round computes class probabilities from the running logits, derives
first/second-order cross-entropy derivatives (g = p - y, h = p(1 - p)), and
grows one depth-limited tree per class by exact greedy search over presorted
feature columns. Leaf weights are the Newton step -G/(H + lambda); logits move
by the learning rate times the leaf weight. Splits whose children would fall
below the minimum hessian sum are rejected.

Trees use an implicit heap layout (children of i are 2i+1, 2i+2), which is
compact because boosting depths are small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from ..dataset import Dataset
from ..errors import ConfigError, FitError, TrainingError

_ABSENT = -2  # node id never created
_LEAF = -1


@dataclass(frozen=True)
class GbtConfig:
    learning_rate: float = 0.21
    n_estimators: int = 1000
    max_depth: int = 2
    min_child_weight: float = 1.4
    reg_lambda: float = 1.0
    seed: int = 0  # kept for interface symmetry; fitting is deterministic

    def validate(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must be in (0, 1], got %r" % self.learning_rate)
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_child_weight < 0:
            raise ConfigError("min_child_weight must be >= 0")
        if self.reg_lambda < 0:
            raise ConfigError("reg_lambda must be >= 0")


@njit(cache=True, parallel=True, nogil=True)
def _fit_round(
    Xt, order_t, g_t, h_t, eta, min_child_weight, lam, max_depth,
    feat_r, thresh_r, weight_r, F_t,
):
    """Grow one tree per class and apply the scaled leaf weights to F in place.

    All inputs are feature-major / class-major (transposed) so the inner scans
    walk contiguous memory: Xt and order_t are (features, rows), g_t / h_t /
    F_t are (classes, rows).
    """
    n_feat, n = Xt.shape
    n_classes = g_t.shape[0]
    max_nodes = feat_r.shape[1]
    for c in prange(n_classes):
        node_of = np.zeros(n, dtype=np.int64)
        G_node = np.zeros(max_nodes)
        H_node = np.zeros(max_nodes)
        cnt_node = np.zeros(max_nodes, dtype=np.int64)
        for i in range(n):
            G_node[0] += g_t[c, i]
            H_node[0] += h_t[c, i]
        cnt_node[0] = n

        for level in range(max_depth):
            lo = (1 << level) - 1
            hi = (1 << (level + 1)) - 1
            any_split = False
            for node in range(lo, hi):
                if feat_r[c, node] != _ABSENT or cnt_node[node] == 0:
                    continue
                G_tot = G_node[node]
                H_tot = H_node[node]
                m_node = cnt_node[node]
                best_gain = 0.0
                best_feat = -1
                best_thresh = 0.0
                if m_node >= 2:
                    parent_term = G_tot * G_tot / (H_tot + lam)
                    for f in range(n_feat):
                        G_l = 0.0
                        H_l = 0.0
                        c_l = 0
                        last_v = 0.0
                        for i in range(n):
                            row = order_t[f, i]
                            if node_of[row] != node:
                                continue
                            v = Xt[f, row]
                            if c_l > 0 and v > last_v:
                                H_r = H_tot - H_l
                                if H_l >= min_child_weight and H_r >= min_child_weight:
                                    G_r = G_tot - G_l
                                    gain = 0.5 * (
                                        G_l * G_l / (H_l + lam)
                                        + G_r * G_r / (H_r + lam)
                                        - parent_term
                                    )
                                    if gain > best_gain:
                                        t = 0.5 * (last_v + v)
                                        if t >= v:  # midpoint rounded up between adjacent floats
                                            t = last_v
                                        best_gain = gain
                                        best_feat = f
                                        best_thresh = t
                            G_l += g_t[c, row]
                            H_l += h_t[c, row]
                            c_l += 1
                            last_v = v
                if best_feat < 0:
                    feat_r[c, node] = _LEAF
                    weight_r[c, node] = -G_tot / (H_tot + lam)
                    continue
                feat_r[c, node] = best_feat
                thresh_r[c, node] = best_thresh
                left = 2 * node + 1
                right = 2 * node + 2
                for i in range(n):
                    if node_of[i] == node:
                        if Xt[best_feat, i] <= best_thresh:
                            node_of[i] = left
                        else:
                            node_of[i] = right
                        G_node[node_of[i]] += g_t[c, i]
                        H_node[node_of[i]] += h_t[c, i]
                        cnt_node[node_of[i]] += 1
                any_split = True
            if not any_split:
                break

        # anything still open at the bottom level becomes a leaf
        lo = (1 << max_depth) - 1
        for node in range(lo, max_nodes):
            if feat_r[c, node] == _ABSENT and cnt_node[node] > 0:
                feat_r[c, node] = _LEAF
                weight_r[c, node] = -G_node[node] / (H_node[node] + lam)
        for i in range(n):
            F_t[c, i] += eta * weight_r[c, node_of[i]]


@njit(cache=True, parallel=True, nogil=True)
def _predict_logits(X, feat, thresh, weight, eta):
    n_q = X.shape[0]
    n_rounds, n_classes, _ = feat.shape
    F = np.zeros((n_q, n_classes))
    for q in prange(n_q):
        for r in range(n_rounds):
            for c in range(n_classes):
                node = 0
                while feat[r, c, node] >= 0:
                    if X[q, feat[r, c, node]] <= thresh[r, c, node]:
                        node = 2 * node + 1
                    else:
                        node = 2 * node + 2
                F[q, c] += weight[r, c, node]
        for c in range(n_classes):
            F[q, c] *= eta
    return F


def _softmax(F: np.ndarray) -> np.ndarray:
    z = F - F.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class GbtModel:
    family = "gbt"

    def __init__(self, config: GbtConfig, classes, feat, thresh, weight, train_loss):
        self.config = config
        self.classes = tuple(classes)
        self._feat = feat
        self._thresh = thresh
        self._weight = weight
        self.train_loss = train_loss  # cross-entropy after each round

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = np.ascontiguousarray(np.atleast_2d(rows), dtype=np.float64)
        F = _predict_logits(rows, self._feat, self._thresh, self._weight, self.config.learning_rate)
        return _softmax(F)

    def _arrays(self) -> dict:
        return {
            "feat": self._feat, "thresh": self._thresh, "weight": self._weight,
            "train_loss": self.train_loss,
        }

    @classmethod
    def _from_state(cls, meta: dict, arrays: dict) -> "GbtModel":
        return cls(
            GbtConfig(**meta["config"]), tuple(meta["classes"]),
            arrays["feat"], arrays["thresh"], arrays["weight"], arrays["train_loss"],
        )


def fit(train: Dataset, cfg: GbtConfig) -> GbtModel:
    """Boost for cfg.n_estimators rounds on the training table."""
    cfg.validate()
    if len(train.roster) < 2:
        raise FitError("boosting needs >= 2 classes, got %d" % len(train.roster))
    X = np.ascontiguousarray(train.features, dtype=np.float64)
    y = train.label_indices()
    n, k = X.shape
    n_classes = len(train.roster)
    # feature-major copies so kernel scans walk contiguous memory
    Xt = np.ascontiguousarray(X.T)
    order_t = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))
    Yt = np.zeros((n_classes, n))
    Yt[y, np.arange(n)] = 1.0

    max_nodes = (1 << (cfg.max_depth + 1)) - 1
    feat = np.full((cfg.n_estimators, n_classes, max_nodes), _ABSENT, dtype=np.int64)
    thresh = np.zeros((cfg.n_estimators, n_classes, max_nodes))
    weight = np.zeros((cfg.n_estimators, n_classes, max_nodes))

    F_t = np.zeros((n_classes, n))
    train_loss = np.empty(cfg.n_estimators)
    rows_idx = np.arange(n)

    def softmax_t(Ft):
        z = Ft - Ft.max(axis=0)
        e = np.exp(z)
        return e / e.sum(axis=0)

    P_t = softmax_t(F_t)
    for r in range(cfg.n_estimators):
        g_t = P_t - Yt
        h_t = P_t * (1.0 - P_t)
        if not np.isfinite(g_t).all():
            raise TrainingError("non-finite gradient at round %d" % r)
        _fit_round(
            Xt, order_t, g_t, h_t, cfg.learning_rate, cfg.min_child_weight, cfg.reg_lambda,
            cfg.max_depth, feat[r], thresh[r], weight[r], F_t,
        )
        P_t = softmax_t(F_t)
        train_loss[r] = -np.mean(np.log(np.maximum(P_t[y, rows_idx], 1e-300)))
        if not np.isfinite(train_loss[r]):
            raise TrainingError("non-finite loss at round %d" % r)
    return GbtModel(cfg, train.roster, feat, thresh, weight, train_loss)
