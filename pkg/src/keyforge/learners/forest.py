"""Random forest of CART trees: Gini splits, bootstrap rows, feature subsets.

Tree growth runs in compiled kernels with an explicit stack. Per-node feature
subsets are drawn from a splitmix64 stream keyed by (tree seed, node path), so
raising max_depth refines a tree instead of reshuffling every draw; together
with bootstrap indices fixed per tree this keeps training accuracy monotone in
depth for a fixed seed. Forest probabilities are the mean of per-tree leaf
class distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from ..dataset import Dataset
from ..errors import ConfigError, FitError

_UNLIMITED_DEPTH = 1 << 30


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 1000
    max_depth: int | None = 35
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    bootstrap: bool = True
    max_features: int | None = None  # None -> ceil(sqrt(n_features))
    seed: int = 0

    def validate(self) -> None:
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1 or None")


@njit(cache=True, inline="always")
def _splitmix(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _grow_tree(
    X, y, sample_idx, n_classes, max_depth, min_leaf, min_split, max_features, tree_seed,
    feature, thresh, left, right, leaf_class, leaf_dist_ptr, dist_buf,
):
    """Grow one CART tree over X[sample_idx]; returns (n_nodes, n_impure).

    Output arrays are preallocated by the caller; children are stored as
    tree-relative node indices.
    """
    n_feat = X.shape[1]
    m = sample_idx.shape[0]
    idx = sample_idx.copy()
    part_buf = np.empty(m, dtype=idx.dtype)
    vals = np.empty(m, dtype=np.float64)
    cnt = np.zeros(n_classes, dtype=np.int64)
    cl = np.zeros(n_classes, dtype=np.int64)
    cr = np.zeros(n_classes, dtype=np.int64)
    feats = np.empty(n_feat, dtype=np.int64)

    cap = feature.shape[0]
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    stack_path = np.empty(cap, dtype=np.uint64)
    stack_parent = np.empty(cap, dtype=np.int64)
    stack_is_left = np.empty(cap, dtype=np.uint8)

    top = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    stack_path[0] = np.uint64(1)
    stack_parent[0] = -1
    stack_is_left[0] = 0
    top = 1

    n_nodes = 0
    n_impure = 0
    while top > 0:
        top -= 1
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        path = stack_path[top]
        parent = stack_parent[top]
        is_left = stack_is_left[top]

        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node
        feature[node] = -1
        left[node] = -1
        right[node] = -1
        leaf_dist_ptr[node] = -1

        m_node = end - start
        for c in range(n_classes):
            cnt[c] = 0
        for i in range(start, end):
            cnt[y[idx[i]]] += 1
        best_c = 0
        best_n = cnt[0]
        ssq_total = np.int64(0)
        for c in range(n_classes):
            ssq_total += cnt[c] * cnt[c]
            if cnt[c] > best_n:
                best_n = cnt[c]
                best_c = c
        pure = best_n == m_node

        splittable = (
            not pure
            and depth < max_depth
            and m_node >= min_split
            and m_node >= 2 * min_leaf
        )

        best_feat = -1
        best_thresh = 0.0
        best_score = -1.0
        if splittable:
            state = _splitmix(tree_seed ^ _splitmix(path))
            for f in range(n_feat):
                feats[f] = f
            n_try = max_features if max_features < n_feat else n_feat
            for i in range(n_try):
                state = _splitmix(state)
                j = i + np.int64(state % np.uint64(n_feat - i))
                tmp = feats[i]
                feats[i] = feats[j]
                feats[j] = tmp
            for fi in range(n_try):
                f = feats[fi]
                for i in range(m_node):
                    vals[i] = X[idx[start + i], f]
                order = np.argsort(vals[:m_node], kind="mergesort")
                lo = vals[order[0]]
                hi = vals[order[m_node - 1]]
                if lo == hi:
                    continue
                for c in range(n_classes):
                    cl[c] = 0
                    cr[c] = cnt[c]
                ssq_l = np.int64(0)
                ssq_r = ssq_total
                m_l = 0
                for i in range(m_node - 1):
                    c = y[idx[start + order[i]]]
                    ssq_l += 2 * cl[c] + 1
                    cl[c] += 1
                    cr[c] -= 1
                    ssq_r -= 2 * cr[c] + 1
                    m_l += 1
                    v = vals[order[i]]
                    v_next = vals[order[i + 1]]
                    if v_next > v and m_l >= min_leaf and (m_node - m_l) >= min_leaf:
                        score = ssq_l / m_l + ssq_r / (m_node - m_l)
                        if score > best_score:
                            t = 0.5 * (v + v_next)
                            if t >= v_next:  # midpoint rounded up between adjacent floats
                                t = v
                            best_score = score
                            best_feat = f
                            best_thresh = t

        if best_feat < 0:
            if pure:
                leaf_class[node] = best_c
            else:
                leaf_class[node] = -1
                leaf_dist_ptr[node] = n_impure
                for c in range(n_classes):
                    dist_buf[n_impure, c] = cnt[c] / m_node
                n_impure += 1
            continue

        feature[node] = best_feat
        thresh[node] = best_thresh
        # stable partition: left block keeps original order, then right block
        n_l = 0
        for i in range(start, end):
            if X[idx[i], best_feat] <= best_thresh:
                part_buf[n_l] = idx[i]
                n_l += 1
        n_r = n_l
        for i in range(start, end):
            if not (X[idx[i], best_feat] <= best_thresh):
                part_buf[n_r] = idx[i]
                n_r += 1
        for i in range(m_node):
            idx[start + i] = part_buf[i]

        # push left last so it is grown first (LIFO)
        stack_start[top] = start + n_l
        stack_end[top] = end
        stack_depth[top] = depth + 1
        stack_path[top] = path * np.uint64(2) + np.uint64(1)
        stack_parent[top] = node
        stack_is_left[top] = 0
        top += 1
        stack_start[top] = start
        stack_end[top] = start + n_l
        stack_depth[top] = depth + 1
        stack_path[top] = path * np.uint64(2)
        stack_parent[top] = node
        stack_is_left[top] = 1
        top += 1
    return n_nodes, n_impure


@njit(cache=True, parallel=True, nogil=True)
def _forest_proba(
    X, offsets, feature, thresh, left, right, leaf_class, leaf_dist_ptr, dist_buf, n_classes
):
    n_q = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros((n_q, n_classes))
    for q in prange(n_q):
        for t in range(n_trees):
            off = offsets[t]
            rel = 0
            while feature[off + rel] >= 0:
                if X[q, feature[off + rel]] <= thresh[off + rel]:
                    rel = left[off + rel]
                else:
                    rel = right[off + rel]
            node = off + rel
            if leaf_class[node] >= 0:
                out[q, leaf_class[node]] += 1.0
            else:
                ptr = leaf_dist_ptr[node]
                for c in range(n_classes):
                    out[q, c] += dist_buf[ptr, c]
    return out / n_trees


class ForestModel:
    family = "rf"

    def __init__(self, config, classes, offsets, feature, thresh, left, right, leaf_class, leaf_dist_ptr, dist_buf):
        self.config = config
        self.classes = tuple(classes)
        self._offsets = offsets
        self._feature = feature
        self._thresh = thresh
        self._left = left
        self._right = right
        self._leaf_class = leaf_class
        self._leaf_dist_ptr = leaf_dist_ptr
        self._dist_buf = dist_buf

    @property
    def n_nodes(self) -> int:
        return int(self._offsets[-1])

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = np.ascontiguousarray(np.atleast_2d(rows), dtype=np.float64)
        return _forest_proba(
            rows, self._offsets, self._feature, self._thresh, self._left, self._right,
            self._leaf_class, self._leaf_dist_ptr, self._dist_buf, len(self.classes),
        )

    def _arrays(self) -> dict:
        return {
            "offsets": self._offsets, "feature": self._feature, "thresh": self._thresh,
            "left": self._left, "right": self._right, "leaf_class": self._leaf_class,
            "leaf_dist_ptr": self._leaf_dist_ptr, "dist_buf": self._dist_buf,
        }

    @classmethod
    def _from_state(cls, meta: dict, arrays: dict) -> "ForestModel":
        cfg = ForestConfig(**meta["config"])
        return cls(
            cfg, tuple(meta["classes"]), arrays["offsets"], arrays["feature"], arrays["thresh"],
            arrays["left"], arrays["right"], arrays["leaf_class"], arrays["leaf_dist_ptr"], arrays["dist_buf"],
        )


def fit(train: Dataset, cfg: ForestConfig) -> ForestModel:
    """Fit the forest; deterministic per seed (trees draw independent streams)."""
    cfg.validate()
    if len(train) == 0:
        raise FitError("random forest needs a non-empty training set")
    X = np.ascontiguousarray(train.features, dtype=np.float64)
    y = train.label_indices().astype(np.int64)
    n, k = X.shape
    n_classes = len(train.roster)
    max_features = cfg.max_features if cfg.max_features is not None else math.isqrt(k - 1) + 1
    max_features = min(max(1, max_features), k)
    max_depth = cfg.max_depth if cfg.max_depth is not None else _UNLIMITED_DEPTH

    root = np.random.SeedSequence(cfg.seed)
    tree_seeds = root.generate_state(cfg.n_estimators, dtype=np.uint64)
    boot_rng = np.random.default_rng(root.spawn(1)[0])
    all_rows = np.arange(n, dtype=np.int64)

    per_tree = []
    cap = 2 * n + 1
    for t in range(cfg.n_estimators):
        if cfg.bootstrap:
            sample_idx = boot_rng.integers(0, n, size=n, dtype=np.int64)
        else:
            sample_idx = all_rows
        feature = np.empty(cap, dtype=np.int64)
        thresh = np.zeros(cap, dtype=np.float64)
        left = np.empty(cap, dtype=np.int64)
        right = np.empty(cap, dtype=np.int64)
        leaf_class = np.full(cap, -1, dtype=np.int64)
        leaf_dist_ptr = np.full(cap, -1, dtype=np.int64)
        dist_buf = np.empty((n + 1, n_classes), dtype=np.float64)
        n_nodes, n_impure = _grow_tree(
            X, y, sample_idx, n_classes, max_depth, cfg.min_samples_leaf, cfg.min_samples_split,
            max_features, tree_seeds[t],
            feature, thresh, left, right, leaf_class, leaf_dist_ptr, dist_buf,
        )
        per_tree.append((
            feature[:n_nodes].copy(), thresh[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), leaf_class[:n_nodes].copy(), leaf_dist_ptr[:n_nodes].copy(),
            dist_buf[:n_impure].copy(),
        ))

    offsets = np.zeros(cfg.n_estimators + 1, dtype=np.int64)
    dist_offset = 0
    dist_blocks = []
    for t, (_f, _t, _l, _r, _lc, ldp, db) in enumerate(per_tree):
        offsets[t + 1] = offsets[t] + len(_f)
        shifted = ldp.copy()
        shifted[shifted >= 0] += dist_offset
        per_tree[t] = (_f, _t, _l, _r, _lc, shifted, db)
        dist_offset += len(db)
        dist_blocks.append(db)
    feature = np.concatenate([p[0] for p in per_tree])
    thresh = np.concatenate([p[1] for p in per_tree])
    left = np.concatenate([p[2] for p in per_tree])
    right = np.concatenate([p[3] for p in per_tree])
    leaf_class = np.concatenate([p[4] for p in per_tree])
    leaf_dist_ptr = np.concatenate([p[5] for p in per_tree])
    dist_buf = np.concatenate(dist_blocks) if dist_offset else np.zeros((1, n_classes))
    return ForestModel(cfg, train.roster, offsets, feature, thresh, left, right, leaf_class, leaf_dist_ptr, dist_buf)
