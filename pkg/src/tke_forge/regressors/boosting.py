"""Gradient boosting with a constant step size, and the second-order
regularized variant with l1/l2 penalties on leaf weights."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from .trees import Binner, _check_X, grow_tree, soft_threshold


def xgb_leaf_weight(G, H, l1=0.0, l2=0.0):
    """Minimizer of ``G w + (H + l2) w^2 / 2 + l1 |w|``.

    ``G`` and ``H`` are the leaf's gradient and hessian sums; for squared
    loss ``g = prediction - target`` and ``h = 1`` per sample.
    """
    if H < 0:
        raise ParameterError("hessian sum must be non-negative")
    d = H + l2
    if d <= 0:
        return 0.0
    t = float(soft_threshold(G, l1))
    if t == 0.0:
        return 0.0
    return -t / d


def leaf_objective(w, G, H, l1=0.0, l2=0.0):
    """Second-order leaf objective whose minimizer is :func:`xgb_leaf_weight`."""
    return G * w + 0.5 * (H + l2) * w * w + l1 * np.abs(w)


class _Boosting:
    def _init_common(self, estimators, depth, learning_rate, max_bins, seed):
        if estimators < 1:
            raise ParameterError("estimators must be >= 1")
        if depth is not None and depth < 1:
            raise ParameterError("depth must be >= 1")
        if not learning_rate > 0:
            raise ParameterError("learning_rate must be > 0")
        self.estimators = int(estimators)
        self.depth = depth
        self.learning_rate = float(learning_rate)
        self.max_bins = max_bins
        self.seed = seed

    def _grow(self, binner, bins, g, h):
        raise NotImplementedError

    def fit(self, X, y):
        X = _check_X(X)
        y = np.asarray(y, dtype=float)
        self.n_features_ = X.shape[1]
        self.init_ = float(y[0]) if np.all(y == y[0]) else float(y.mean())
        binner = Binner(X, self.max_bins)
        bins = binner.transform(X)
        F = np.full(y.shape, self.init_)
        self.trees_ = []
        self.train_mse_ = [float(np.mean((y - F) ** 2))]
        h = np.ones_like(y)
        for _ in range(self.estimators):
            tree = self._grow(binner, bins, F - y, h)
            F = F + self.learning_rate * tree.predict(X)
            self.trees_.append(tree)
            self.train_mse_.append(float(np.mean((y - F) ** 2)))
        return self

    def staged_predict(self, X):
        X = _check_X(X, self.n_features_)
        F = np.full(X.shape[0], self.init_)
        yield F.copy()
        for tree in self.trees_:
            F = F + self.learning_rate * tree.predict(X)
            yield F.copy()

    def predict(self, X):
        X = _check_X(X, self.n_features_)
        F = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            F += self.learning_rate * tree.predict(X)
        return F


class GradientBoosting(_Boosting):
    """Squared-loss boosting: each stage fits a mean-leaf tree to the current
    residuals and is added with the constant step ``learning_rate``."""

    def __init__(self, estimators=100, learning_rate=0.2, depth=3, min_split=2,
                 min_leaf=1, max_bins=256, seed=0):
        self._init_common(estimators, depth, learning_rate, max_bins, seed)
        self.min_split = min_split
        self.min_leaf = min_leaf

    def _grow(self, binner, bins, g, h):
        return grow_tree(binner, bins, g, h, max_depth=self.depth,
                         min_samples_split=self.min_split, min_samples_leaf=self.min_leaf)


class XGBoost(_Boosting):
    """Second-order boosting whose leaves carry the soft-thresholded weights
    of :func:`xgb_leaf_weight`; splits must clear ``gamma``."""

    def __init__(self, estimators=200, depth=10, learning_rate=0.01, l1=1.0, l2=1.5,
                 gamma=0.0, min_child_weight=1.0, max_bins=256, seed=0):
        self._init_common(estimators, depth, learning_rate, max_bins, seed)
        if l1 < 0 or l2 < 0 or gamma < 0 or min_child_weight < 0:
            raise ParameterError("regularization weights must be >= 0")
        self.l1 = float(l1)
        self.l2 = float(l2)
        self.gamma = float(gamma)
        self.min_child_weight = float(min_child_weight)

    def _grow(self, binner, bins, g, h):
        return grow_tree(binner, bins, g, h, max_depth=self.depth, l1=self.l1, l2=self.l2,
                         gamma=self.gamma, min_child_weight=self.min_child_weight)
