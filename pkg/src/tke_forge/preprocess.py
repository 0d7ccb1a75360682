"""Predictor-table assembly, standardization and train/test/validation
splitting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateVarianceError,
    InsufficientDataError,
    ParameterError,
)

FEATURES = ("T1", "T2", "T3", "T4", "T5", "T6", "T7", "sonic_T")
SPLITS = ("train", "test", "val")
DEFAULT_RATIOS = (0.64, 0.16, 0.20)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    X: np.ndarray
    y: np.ndarray
    time_s: np.ndarray
    split: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(FEATURES):
            raise ParameterError(f"X must be (N, {len(FEATURES)}), got {self.X.shape}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ParameterError("feature table contains NaN or Inf")

    def __len__(self):
        return len(self.y)

    def mask(self, *names):
        if self.split is None:
            raise ParameterError("table has no split labels")
        return np.isin(self.split, names)

    def rows(self, *names):
        m = self.mask(*names)
        return self.X[m], self.y[m]


@dataclass(frozen=True)
class ScalerState:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) * self.std + self.mean


def assemble(ds, turb, name=None):
    if len(ds) != len(turb):
        raise AlignmentError(f"{len(ds)} records vs {len(turb)} turbulence samples")
    if not np.array_equal(ds.time_s, turb.time_s):
        i = int(np.flatnonzero(ds.time_s != turb.time_s)[0])
        raise AlignmentError(f"timestamp mismatch at row {i}: {ds.time_s[i]} vs {turb.time_s[i]}")
    if turb.tke_ma is None:
        raise AlignmentError("turbulence series lacks its moving average")
    X = np.column_stack([ds.thermocouples, ds.column("sonic_T_C")])
    return FeatureTable(X, np.asarray(turb.tke_ma, dtype=float).copy(), ds.time_s.copy(),
                        name=name or ds.name)


def fit_scaler(X, names=FEATURES):
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise InsufficientDataError("scaler needs at least 2 training rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    for j in range(X.shape[1]):
        if std[j] == 0 or np.ptp(X[:, j]) == 0:
            raise DegenerateVarianceError(f"column {names[j]!r} has zero variance on train rows",
                                          column=names[j])
    return ScalerState(mean, std)


def transform(X, s):
    return s.transform(X)


def _check_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1) > 1e-9:
        raise ParameterError(f"split ratios must be three non-negatives summing to 1, got {ratios}")
    return ratios


def _round(x):
    return int(math.floor(x + 0.5))


def split_counts(n, ratios=DEFAULT_RATIOS):
    """Row counts (train, test, val): validation is carved off first, then the
    remainder is divided train/test in proportion."""
    tr, te, va = _check_ratios(ratios)
    n_val = _round(va * n)
    rest = n - n_val
    n_test = _round(te / (tr + te) * rest) if tr + te > 0 else 0
    return rest - n_test, n_test, n_val


def split(table, seed=42, ratios=DEFAULT_RATIOS, mode="shuffle"):
    n = len(table)
    if n < 10:
        raise InsufficientDataError(f"need at least 10 rows to split, got {n}")
    n_train, n_test, n_val = split_counts(n, ratios)
    labels = np.empty(n, dtype=object)
    if mode == "shuffle":
        perm = np.random.default_rng(seed).permutation(n)
        labels[perm[:n_val]] = "val"
        labels[perm[n_val:n_val + n_test]] = "test"
        labels[perm[n_val + n_test:]] = "train"
    elif mode == "chronological":
        # row order; merged tables keep each constituent's block contiguous
        order = np.arange(n)
        labels[order[:n_train]] = "train"
        labels[order[n_train:n_train + n_test]] = "test"
        labels[order[n_train + n_test:]] = "val"
    else:
        raise ParameterError(f"unknown split mode {mode!r}")
    return replace(table, split=labels.astype(str))


def shuffle_split_cv(n_or_table, k=5, train_frac=0.8, seed=42):
    """``k`` independent random partitions of the rows into fit/eval parts.

    Given a labelled table, only its train and test rows take part; indices
    are positions in the full table.
    """
    if not 0 < train_frac < 1:
        raise ParameterError(f"train_frac must lie in (0, 1), got {train_frac}")
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k}")
    if isinstance(n_or_table, FeatureTable):
        pool = np.flatnonzero(n_or_table.mask("train", "test")) if n_or_table.split is not None \
            else np.arange(len(n_or_table))
    else:
        pool = np.arange(int(n_or_table))
    n_fit = _round(train_frac * pool.size)
    if n_fit < 1 or n_fit >= pool.size:
        raise InsufficientDataError(f"{pool.size} rows cannot be split {train_frac:g}/{1 - train_frac:g}")
    rng = np.random.default_rng(seed)
    folds = []
    for _ in range(int(k)):
        perm = pool[rng.permutation(pool.size)]
        folds.append((np.sort(perm[:n_fit]), np.sort(perm[n_fit:])))
    return folds


def format_features_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("time_s",) + FEATURES + ("tke_ma", "split"))
    labels = table.split if table.split is not None else [""] * len(table)
    for t, x, y, s in zip(table.time_s, table.X, table.y, labels):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(y)), s])
    return buf.getvalue()
