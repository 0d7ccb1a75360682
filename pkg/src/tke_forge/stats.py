"""Correlation coefficients, regression metrics and Gaussian kernel density
estimates of residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateVarianceError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
)

CORR_VARIABLES = ("T1", "T2", "T3", "T4", "T5", "T6", "T7", "sonic_T", "tke_ma")


@dataclass(frozen=True)
class CorrelationResult:
    pearson_r: float
    spearman_rho: float
    n: int


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    mse: float
    mae: float
    n: int


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))


def _pair(x, y, min_len):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_len:
        raise InsufficientDataError(f"need at least {min_len} samples, got {x.size}")
    return x, y


def pearson(x, y):
    x, y = _pair(x, y, 2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise DegenerateVarianceError("pearson: constant series has zero variance")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def rank_average(x):
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def spearman(x, y):
    x, y = _pair(x, y, 2)
    rx, ry = rank_average(x), rank_average(y)
    n = x.size
    if np.unique(x).size == n and np.unique(y).size == n:
        d = rx - ry
        return float(1.0 - 6.0 * (d @ d) / (n * (n * n - 1)))
    return pearson(rx, ry)


def correlate(x, y):
    x, y = _pair(x, y, 2)
    return CorrelationResult(pearson(x, y), spearman(x, y), x.size)


def r_squared(y, y_hat):
    y, y_hat = _pair(y, y_hat, 2)
    d = y - y.mean()
    ss_tot = d @ d
    if ss_tot == 0:
        raise DegenerateVarianceError("r_squared: targets are constant")
    e = y - y_hat
    return float(1.0 - (e @ e) / ss_tot)


def mse(y, y_hat):
    y, y_hat = _pair(y, y_hat, 1)
    e = y - y_hat
    return float(e @ e / e.size)


def mae(y, y_hat):
    y, y_hat = _pair(y, y_hat, 1)
    return float(np.mean(np.abs(y - y_hat)))


def evaluate(y, y_hat):
    return MetricsReport(r_squared(y, y_hat), mse(y, y_hat), mae(y, y_hat), len(y))


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def kde(residuals, bandwidth=None, n_grid=512, tails=5.0):
    """Gaussian-kernel density of ``residuals`` on an even grid spanning the
    data range extended by ``tails`` bandwidths on both sides.

    The grid is refined beyond ``n_grid`` points when needed so the spacing
    never exceeds half a bandwidth; coarser grids bias the trapezoidal
    integral of narrow bumps.
    """
    x = np.asarray(residuals, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientDataError("kde needs at least 2 residuals")
    scale = max(1.0, float(np.abs(x).max()))
    if bandwidth is None:
        h = silverman_bandwidth(x)
        if h < 1e-8 * scale:
            # spread at rounding level (identical residuals): use a narrow bump
            # the grid can still resolve
            h = 1e-6 * scale
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ParameterError(f"bandwidth must be positive, got {bandwidth!r}")
        if h < 1e-10 * scale:
            raise ParameterError(f"bandwidth {h:g} is below the grid resolution at |x| ~ {scale:g}")
    lo, hi = x.min() - tails * h, x.max() + tails * h
    n = max(int(n_grid), int(math.ceil((hi - lo) / (0.5 * h))) + 1)
    n = min(n, 200_001)
    grid = np.linspace(lo, hi, n)
    dens = np.zeros(n)
    norm = 1.0 / (x.size * h * math.sqrt(2 * math.pi))
    for start in range(0, n, 4096):
        z = (grid[start:start + 4096, None] - x[None, :]) / h
        dens[start:start + 4096] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return KdeCurve(grid, dens, h)


def correlation_matrix(table, names=CORR_VARIABLES):
    """Pearson and Spearman matrices over the columns of ``table`` (N x k)."""
    table = np.asarray(table, dtype=float)
    k = table.shape[1]
    if len(names) != k:
        raise ShapeError(f"{k} columns but {len(names)} names")
    for j in range(k):
        if np.all(table[:, j] == table[0, j]):
            raise DegenerateVarianceError(f"column {names[j]!r} is constant", column=names[j])
    P = np.eye(k)
    S = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            P[i, j] = P[j, i] = pearson(table[:, i], table[:, j])
            S[i, j] = S[j, i] = spearman(table[:, i], table[:, j])
    return P, S
