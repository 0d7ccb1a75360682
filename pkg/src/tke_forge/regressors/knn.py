"""Brute-force k-nearest-neighbour regression in Euclidean distance."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError, ShapeError
from .trees import _check_X

_BLOCK = 1024


def knn_distance(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(d @ d))


class KNN:
    """Average of the ``neighbors`` closest training targets.

    With ``weights="distance"`` each neighbour is weighted by 1/distance; a
    query that coincides with training points returns the mean target of
    those exact matches.
    """

    def __init__(self, neighbors=3, weights="distance", seed=0):
        if int(neighbors) != neighbors or neighbors < 1:
            raise ParameterError("neighbors must be a positive integer")
        if weights not in ("uniform", "distance"):
            raise ParameterError(f"unknown weighting {weights!r}")
        self.neighbors = int(neighbors)
        self.weights = weights
        self.seed = seed

    def fit(self, X, y):
        X = _check_X(X)
        y = np.asarray(y, dtype=float)
        if self.neighbors > X.shape[0]:
            raise ParameterError(f"neighbors={self.neighbors} exceeds {X.shape[0]} training rows")
        self.X_ = X.copy()
        self.y_ = y.copy()
        self._sq = np.einsum("ij,ij->i", X, X)
        return self

    def kneighbors(self, Q):
        Q = _check_X(Q, self.X_.shape[1])
        k = self.neighbors
        dist = np.empty((Q.shape[0], k))
        ind = np.empty((Q.shape[0], k), dtype=np.int64)
        for s in range(0, Q.shape[0], _BLOCK):
            q = Q[s:s + _BLOCK]
            d2 = self._sq[None, :] - 2.0 * q @ self.X_.T + np.einsum("ij,ij->i", q, q)[:, None]
            part = np.argpartition(d2, k - 1, axis=1)[:, :k] if k < d2.shape[1] \
                else np.tile(np.arange(d2.shape[1]), (q.shape[0], 1))
            # recompute exactly so exact matches give exactly zero
            diff = q[:, None, :] - self.X_[part]
            dd = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            order = np.lexsort((part, dd), axis=1)
            rows = np.arange(q.shape[0])[:, None]
            dist[s:s + _BLOCK] = dd[rows, order]
            ind[s:s + _BLOCK] = part[rows, order]
        return dist, ind

    def predict(self, X):
        dist, ind = self.kneighbors(X)
        yk = self.y_[ind]
        # averages are anchored at the nearest target so equal targets stay exact
        y0 = yk[:, :1]
        if self.weights == "uniform":
            return y0[:, 0] + (yk - y0).mean(axis=1)
        zero = dist == 0
        with np.errstate(divide="ignore"):
            w = np.where(zero.any(axis=1, keepdims=True), zero.astype(float), 1.0 / dist)
        return y0[:, 0] + (w * (yk - y0)).sum(axis=1) / w.sum(axis=1)
