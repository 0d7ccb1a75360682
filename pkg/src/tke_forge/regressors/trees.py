"""Regression trees grown level by level from per-sample gradient/hessian
statistics, and the bootstrap random forest built on them.

One builder serves all three tree ensembles. A node's score is
``T(G)^2 / (H + l2)`` with ``T`` the l1 soft threshold, its leaf value
``-T(G) / (H + l2)``. With ``g = -y``, ``h = 1`` and no regularization the
leaf value is the node mean and the gain is the usual variance reduction.

Candidate thresholds are midpoints between consecutive distinct feature
values; features with more than ``max_bins`` distinct values are reduced to
``max_bins`` quantile cut points.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError

UNBOUNDED_DEPTH = 64
_REL_GAIN_TOL = 1e-12


def soft_threshold(G, l1):
    return np.sign(G) * np.maximum(np.abs(G) - l1, 0.0)


def _score(G, H, l1, l2):
    t = soft_threshold(G, l1) if l1 else G
    d = H + l2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(d > 0, t * t / d, 0.0)


def _leaf_value(G, H, l1, l2):
    t = soft_threshold(G, l1) if l1 else G
    d = H + l2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(d > 0, -t / d, 0.0)


class Binner:
    """Per-feature candidate thresholds and the bin index of every sample.

    ``bin(x) = #{thresholds < x}``, so ``x <= thresholds[t]`` exactly when
    ``bin(x) <= t``; trees trained on bins predict on raw values.
    """

    def __init__(self, X, max_bins=256):
        X = np.asarray(X, dtype=float)
        self.thresholds = []
        for j in range(X.shape[1]):
            col = np.sort(X[:, j])
            u = np.unique(col)
            if u.size <= max_bins:
                cand = u
            else:
                cut = (np.arange(1, max_bins) * col.size) // max_bins
                cand = np.unique(col[cut])
            nxt = np.searchsorted(u, cand, side="right")
            keep = nxt < u.size
            self.thresholds.append((cand[keep] + u[nxt[keep]]) / 2.0)
        self.n_bins = [t.size + 1 for t in self.thresholds]

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape, dtype=np.int32)
        for j, thr in enumerate(self.thresholds):
            out[:, j] = np.searchsorted(thr, X[:, j], side="left")
        return out


@dataclass
class DecisionTree:
    """Flat array representation; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    max_depth: int

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    @property
    def depth(self):
        depth = np.zeros(self.feature.size, dtype=int)
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth + 1):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows, np.maximum(f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def same_structure(self, other):
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("feature", "threshold", "left", "right", "value", "n_samples")
        )


def _n_candidate_features(max_features, d):
    if max_features in (None, "auto", "all"):
        return d
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    if isinstance(max_features, float):
        if not 0 < max_features <= 1:
            raise ParameterError(f"max_features fraction must lie in (0, 1], got {max_features}")
        return max(1, int(max_features * d))
    if isinstance(max_features, int) and 1 <= max_features <= d:
        return max_features
    raise ParameterError(f"invalid max_features {max_features!r}")


def grow_tree(
    binner,
    bins,
    g,
    h,
    sample_index=None,
    *,
    max_depth=None,
    min_samples_split=2,
    min_samples_leaf=1,
    min_child_weight=0.0,
    l1=0.0,
    l2=0.0,
    gamma=0.0,
    max_features=None,
    rng=None,
):
    """Grow one tree on the samples ``sample_index`` (repeats allowed).

    Ties between candidate splits go to the lowest feature index, then the
    smallest threshold.
    """
    max_depth = UNBOUNDED_DEPTH if max_depth is None else int(max_depth)
    n_all, d = bins.shape
    idx = np.arange(n_all) if sample_index is None else np.asarray(sample_index)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    n_feat = _n_candidate_features(max_features, d)
    if n_feat < d and rng is None:
        raise ParameterError("feature subsampling needs an rng")

    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(v, c):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(v))
        count.append(int(c))
        return len(feature) - 1

    pos = np.zeros(idx.size, dtype=np.int64)
    gs, hs = g[idx], h[idx]
    G0, H0 = gs.sum(), hs.sum()
    level = [new_node(_leaf_value(G0, H0, l1, l2), idx.size)]

    for depth in range(max_depth):
        m = len(level)
        G = np.bincount(pos, gs, minlength=m)
        H = np.bincount(pos, hs, minlength=m)
        C = np.bincount(pos, minlength=m)
        G2 = np.bincount(pos, gs * gs, minlength=m)
        open_ = (C >= min_samples_split) & (C >= 2 * min_samples_leaf)
        if not open_.any():
            break
        parent = _score(G, H, l1, l2)

        best_gain = np.full(m, -np.inf)
        best_feat = np.full(m, -1, dtype=np.int64)
        best_bin = np.zeros(m, dtype=np.int64)
        if n_feat < d:
            allowed = np.zeros((m, d), dtype=bool)
            for i in range(m):
                allowed[i, rng.choice(d, n_feat, replace=False)] = True
        for f in range(d):
            nb = binner.n_bins[f]
            if nb < 2:
                continue
            key = pos * nb + bins[idx, f]
            Gb = np.bincount(key, gs, minlength=m * nb).reshape(m, nb)
            Hb = np.bincount(key, hs, minlength=m * nb).reshape(m, nb)
            Cb = np.bincount(key, minlength=m * nb).reshape(m, nb)
            GL = np.cumsum(Gb, axis=1)[:, :-1]
            HL = np.cumsum(Hb, axis=1)[:, :-1]
            CL = np.cumsum(Cb, axis=1)[:, :-1]
            GR, HR, CR = G[:, None] - GL, H[:, None] - HL, C[:, None] - CL
            gain = 0.5 * (_score(GL, HL, l1, l2) + _score(GR, HR, l1, l2) - parent[:, None]) - gamma
            ok = (CL >= min_samples_leaf) & (CR >= min_samples_leaf)
            if min_child_weight > 0:
                ok &= (HL >= min_child_weight) & (HR >= min_child_weight)
            gain = np.where(ok, gain, -np.inf)
            t = np.argmax(gain, axis=1)
            gt = gain[np.arange(m), t]
            if n_feat < d:
                gt = np.where(allowed[:, f], gt, -np.inf)
            better = gt > best_gain
            best_gain = np.where(better, gt, best_gain)
            best_feat = np.where(better, f, best_feat)
            best_bin = np.where(better, t, best_bin)

        # float noise in constant nodes yields ~1e-16 relative "gains"
        do_split = open_ & (best_feat >= 0) & (best_gain > np.maximum(_REL_GAIN_TOL * G2, 0.0))
        if not do_split.any():
            break

        keep = do_split[pos]
        idx, pos, gs, hs = idx[keep], pos[keep], gs[keep], hs[keep]
        goes_right = bins[idx, best_feat[pos]] > best_bin[pos]
        side = pos * 2 + goes_right
        Gc = np.bincount(side, gs, minlength=2 * m).reshape(m, 2)
        Hc = np.bincount(side, hs, minlength=2 * m).reshape(m, 2)
        Cc = np.bincount(side, minlength=2 * m).reshape(m, 2)
        child_of = np.full((m, 2), -1, dtype=np.int64)
        next_level = []
        for i in np.flatnonzero(do_split):
            node = level[i]
            f, b = int(best_feat[i]), int(best_bin[i])
            feature[node] = f
            threshold[node] = float(binner.thresholds[f][b])
            vals = _leaf_value(Gc[i], Hc[i], l1, l2)
            left[node] = new_node(vals[0], Cc[i, 0])
            right[node] = new_node(vals[1], Cc[i, 1])
            child_of[i] = (len(next_level), len(next_level) + 1)
            next_level += [left[node], right[node]]
        pos = child_of[pos, goes_right.astype(np.int64)]
        level = next_level

    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(count, dtype=np.int64),
        max_depth,
    )


def _check_X(X, n_features=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"expected {n_features} columns, got {X.shape[1]}")
    return X


def default_threads():
    try:
        return max(1, int(os.environ.get("TKE_FORGE_THREADS", "1")))
    except ValueError:
        return 1


class TreeRegressor:
    """A single unregularized regression tree (mean leaves)."""

    def __init__(self, depth=None, min_split=2, min_leaf=1, max_features=None, max_bins=256, seed=0):
        if depth is not None and depth < 1:
            raise ParameterError("depth must be >= 1")
        self.depth = depth
        self.min_split = min_split
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.max_bins = max_bins
        self.seed = seed

    def fit(self, X, y):
        X = _check_X(X)
        y = np.asarray(y, dtype=float)
        binner = Binner(X, self.max_bins)
        # targets are anchored at y[0] so a constant node reproduces it exactly
        tree = grow_tree(
            binner, binner.transform(X), y[0] - y, np.ones_like(y),
            max_depth=self.depth, min_samples_split=self.min_split,
            min_samples_leaf=self.min_leaf, max_features=self.max_features,
            rng=np.random.default_rng(self.seed),
        )
        tree.value = tree.value + y[0]
        self.tree_ = tree
        self.n_features_ = X.shape[1]
        return self

    def predict(self, X):
        return self.tree_.predict(_check_X(X, self.n_features_))


class RandomForest:
    """Bootstrap-aggregated regression trees; the prediction is the plain
    mean of the member trees."""

    def __init__(self, estimators=200, depth=10, min_split=2, min_leaf=1,
                 max_features="auto", bootstrap=True, max_bins=256, seed=0, n_jobs=None):
        if estimators < 1:
            raise ParameterError("estimators must be >= 1")
        if depth is not None and depth < 1:
            raise ParameterError("depth must be >= 1")
        if min_split < 2:
            raise ParameterError("min_split must be >= 2")
        self.estimators = int(estimators)
        self.depth = depth
        self.min_split = min_split
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.max_bins = max_bins
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X = _check_X(X)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        binner = Binner(X, self.max_bins)
        bins = binner.transform(X)
        g, h = y[0] - y, np.ones(n)
        seeds = np.random.SeedSequence(self.seed).spawn(self.estimators)

        def one(ss):
            rng = np.random.default_rng(ss)
            sample = rng.integers(0, n, n) if self.bootstrap else None
            tree = grow_tree(
                binner, bins, g, h, sample,
                max_depth=self.depth, min_samples_split=self.min_split,
                min_samples_leaf=self.min_leaf, max_features=self.max_features, rng=rng,
            )
            tree.value = tree.value + y[0]
            return tree

        workers = self.n_jobs or default_threads()
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                self.trees_ = list(ex.map(one, seeds))
        else:
            self.trees_ = [one(s) for s in seeds]
        self.n_features_ = X.shape[1]
        return self

    def predict_all(self, X):
        X = _check_X(X, self.n_features_)
        return np.stack([t.predict(X) for t in self.trees_])

    def predict(self, X):
        P = self.predict_all(X)
        return P[0] + (P - P[0]).mean(axis=0)
