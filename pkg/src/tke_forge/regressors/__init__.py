"""Six regressors behind one ``fit(spec, X, y)`` / ``predict(model, X)``
contract, with the reference hyperparameters as defaults."""

from __future__ import annotations

import json
import pickle
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError, ShapeError, TkeForgeError
from .boosting import GradientBoosting, XGBoost, leaf_objective, xgb_leaf_weight
from .gpr import GPR, gpr_lml, gpr_lml_grad, kernel, lml_from_cov
from .knn import KNN, knn_distance
from .mlp import MLP, mlp_train, mlp_train_step
from .penalties import elastic_net, elastic_net_bounds, l1_norm, l2_norm, norm_chain_check
from .trees import DecisionTree, RandomForest, TreeRegressor

KINDS = ("knn", "rf", "gbr", "xgb", "gpr", "mlp")

_CLASSES = {
    "knn": KNN,
    "rf": RandomForest,
    "gbr": GradientBoosting,
    "xgb": XGBoost,
    "gpr": GPR,
    "mlp": MLP,
}

DEFAULTS = {
    "knn": {"neighbors": 3, "weights": "distance"},
    "rf": {"estimators": 200, "depth": 10, "min_split": 2, "max_features": "auto"},
    "gbr": {"estimators": 100, "learning_rate": 0.2, "depth": 3},
    "xgb": {"estimators": 200, "depth": 10, "learning_rate": 0.01, "l1": 1.0, "l2": 1.5, "gamma": 0.0},
    "gpr": {"length_scale": 1.0, "noise_level": 1.0, "rq_length_scale": 1.0, "rq_alpha": 1.0,
            "alpha": 0.01, "restarts": 3, "max_n": 4000},
    "mlp": {"hidden": [64, 32, 16], "learning_rate": 1e-4, "batch": 42, "epochs": 1000,
            "patience": 10, "l1": 0.01, "activation": "relu"},
}

_ALIASES = {"rate": "learning_rate", "k": "neighbors", "n_neighbors": "neighbors",
            "n_estimators": "estimators", "max_depth": "depth"}


@dataclass(frozen=True)
class RegressorSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        merged = dict(DEFAULTS[self.kind])
        for k, v in self.params.items():
            merged[_ALIASES.get(k, k)] = v
        object.__setattr__(self, "params", merged)

    def build(self):
        try:
            return _CLASSES[self.kind](**self.params, seed=self.seed)
        except TypeError as exc:
            raise ParameterError(f"{self.kind}: {exc}") from None

    def to_dict(self):
        return {"kind": self.kind, "params": self.params, "seed": self.seed}


def fit(spec, X, y, **fit_kwargs):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"X {X.shape} and y {y.shape} do not pair up")
    if X.shape[0] < 2:
        raise ParameterError("need at least 2 training rows")
    model = spec.build()
    model.fit(X, y, **fit_kwargs)
    model.spec_ = spec
    return model


def predict(model, X):
    out = model.predict(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(out)):
        raise TkeForgeError(f"{type(model).__name__} produced non-finite predictions")
    return out


_MAGIC = b"TKEFMODL"
FORMAT_VERSION = 1


def save_model(model, path):
    """Container: magic, u16 format version, u32 header length, JSON header
    (with the RegressorSpec), pickled model."""
    spec = getattr(model, "spec_", None)
    header = json.dumps(
        {"format": FORMAT_VERSION, "spec": spec.to_dict() if spec else None,
         "class": type(model).__name__},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(header)))
        fh.write(header)
        pickle.dump(model, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise TkeForgeError(f"{path}: not a tke-forge model file")
        version, n = struct.unpack("<HI", fh.read(6))
        if version > FORMAT_VERSION:
            raise TkeForgeError(f"{path}: format version {version} is newer than {FORMAT_VERSION}")
        header = json.loads(fh.read(n))
        model = pickle.load(fh)
    return header, model


__all__ = [
    "KINDS", "DEFAULTS", "RegressorSpec", "fit", "predict", "save_model", "load_model",
    "KNN", "RandomForest", "GradientBoosting", "XGBoost", "GPR", "MLP", "TreeRegressor",
    "DecisionTree", "knn_distance", "xgb_leaf_weight", "leaf_objective", "gpr_lml",
    "gpr_lml_grad", "lml_from_cov", "kernel", "mlp_train", "mlp_train_step",
    "norm_chain_check", "l1_norm", "l2_norm", "elastic_net", "elastic_net_bounds",
]
