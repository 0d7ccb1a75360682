"""Fully connected regression network trained with Adam on MSE plus an l1
penalty on selected weight matrices."""

from __future__ import annotations

import copy

import numpy as np

from ..errors import DivergenceError, ParameterError
from .trees import _check_X

ACTIVATIONS = ("relu", "relu_softmax")


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class MLP:
    """``n_in -> hidden[0] -> ... -> hidden[-1] -> 1`` with ReLU hidden units
    and a linear output.

    ``activation="relu_softmax"`` replaces the last hidden activation with a
    softmax, read out by the linear output unit. ``l1_layers`` indexes the
    weight matrices that carry the l1 penalty (``"all"`` for every one);
    biases are never penalized. :meth:`fit` trains on standardized
    targets; a constant target is reproduced exactly.
    """

    def __init__(self, hidden=(64, 32, 16), learning_rate=1e-4, batch=42, epochs=1000,
                 patience=10, l1=0.01, l1_layers=(2,), activation="relu",
                 beta1=0.9, beta2=0.999, eps=1e-8, val_fraction=0.2, seed=0):
        hidden = tuple(int(h) for h in hidden)
        if not hidden or min(hidden) < 1:
            raise ParameterError("hidden widths must be positive")
        if learning_rate < 0 or l1 < 0:
            raise ParameterError("learning_rate and l1 must be >= 0")
        if batch < 1 or epochs < 1 or patience < 1:
            raise ParameterError("batch, epochs and patience must be >= 1")
        if activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        if not 0 < val_fraction < 1:
            raise ParameterError("val_fraction must lie in (0, 1)")
        self.hidden = hidden
        self.learning_rate = float(learning_rate)
        self.batch = int(batch)
        self.epochs = int(epochs)
        self.patience = int(patience)
        self.l1 = float(l1)
        self.l1_layers = l1_layers
        self.activation = activation
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.val_fraction = val_fraction
        self.seed = seed
        self.W = None

    # parameters -------------------------------------------------------

    def init_params(self, n_in, rng=None):
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        sizes = (n_in,) + self.hidden + (1,)
        self.W, self.b = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            self.W.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0
        self.n_features_ = n_in
        self.y_mean_, self.y_scale_ = 0.0, 1.0
        return self

    @property
    def params(self):
        return self.W + self.b

    @params.setter
    def params(self, values):
        k = len(self.W)
        self.W = [np.array(p, dtype=float) for p in values[:k]]
        self.b = [np.array(p, dtype=float) for p in values[k:]]

    def _penalized(self):
        if self.l1_layers == "all":
            return range(len(self.W))
        return [i for i in self.l1_layers if i < len(self.W)]

    def weight_vector(self):
        return np.concatenate([w.ravel() for w in self.W])

    # forward / backward ----------------------------------------------

    def _forward(self, X):
        acts, pre = [X], []
        last_hidden = len(self.W) - 2
        a = X
        for i, (W, b) in enumerate(zip(self.W[:-1], self.b[:-1])):
            z = a @ W + b
            pre.append(z)
            if self.activation == "relu_softmax" and i == last_hidden:
                a = _softmax(z)
            else:
                a = np.maximum(z, 0.0)
            acts.append(a)
        out = (a @ self.W[-1] + self.b[-1])[:, 0]
        return out, acts, pre

    def predict(self, X):
        X = _check_X(X, self.n_features_)
        return self.y_mean_ + self.y_scale_ * self._forward(X)[0]

    def penalty(self):
        return self.l1 * sum(np.abs(self.W[i]).sum() for i in self._penalized())

    def loss(self, X, y):
        out = self._forward(X)[0]
        return float(np.mean((out - y) ** 2) + self.penalty())

    def loss_and_grad(self, X, y):
        out, acts, pre = self._forward(X)
        n = X.shape[0]
        err = out - y
        loss = float(err @ err / n + self.penalty())
        gW = [None] * len(self.W)
        gb = [None] * len(self.b)
        delta = (2.0 / n) * err[:, None]
        last_hidden = len(self.W) - 2
        for i in range(len(self.W) - 1, -1, -1):
            gW[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i == 0:
                break
            da = delta @ self.W[i].T
            if self.activation == "relu_softmax" and i - 1 == last_hidden:
                s = acts[i]
                delta = s * (da - (da * s).sum(axis=1, keepdims=True))
            else:
                delta = da * (pre[i - 1] > 0)
        for i in self._penalized():
            gW[i] = gW[i] + self.l1 * np.sign(self.W[i])
        return loss, gW + gb

    # optimization ------------------------------------------------------

    def adam_update(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        new = []
        for k, (p, g) in enumerate(zip(self.params, grads)):
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            new.append(p - self.learning_rate * mhat / (np.sqrt(vhat) + self.eps))
        self.params = new

    def train_step(self, X, y):
        if X.shape[0] == 0:
            raise ParameterError("empty batch")
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = self.loss_and_grad(X, y)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss after {self.t} steps")
        self.adam_update(grads)
        return loss

    def snapshot(self):
        return copy.deepcopy((self.W, self.b, self.m, self.v, self.t))

    def restore(self, snap):
        self.W, self.b, self.m, self.v, self.t = copy.deepcopy(snap)

    def fit(self, X, y, callback=None):
        """Hold out ``val_fraction`` of the given rows for early stopping and
        train with :func:`mlp_train`."""
        X = _check_X(X)
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng(self.seed)
        self.init_params(X.shape[1], rng)
        if np.all(y == y[0]):
            self.history_, self.epochs_run_, self.best_val_mse_ = [], 0, 0.0
            self.y_mean_, self.y_scale_ = float(y[0]), 0.0
            return self
        mean, sd = float(y.mean()), float(y.std())
        z = (y - mean) / sd
        perm = rng.permutation(X.shape[0])
        n_val = max(1, int(round(self.val_fraction * X.shape[0])))
        va, tr = perm[:n_val], perm[n_val:]
        mlp_train(self, (X[tr], z[tr]), (X[va], z[va]), self.epochs, self.patience,
                  rng=rng, callback=callback)
        self.y_mean_, self.y_scale_ = mean, sd
        return self


def mlp_train_step(model, X, y):
    loss = model.train_step(np.asarray(X, dtype=float), np.asarray(y, dtype=float))
    return model, loss


def mlp_train(model, train, val, epochs=None, patience=None, rng=None, callback=None):
    """Minibatch Adam with early stopping on validation MSE.

    Training stops once ``patience`` consecutive epochs pass without a
    strict improvement; the best-validation parameters are restored.
    ``callback(epoch, model)`` runs after every epoch.
    """
    epochs = model.epochs if epochs is None else int(epochs)
    patience = model.patience if patience is None else int(patience)
    if patience < 1:
        raise ParameterError("patience must be >= 1")
    Xtr, ytr = (np.asarray(a, dtype=float) for a in train)
    Xva, yva = (np.asarray(a, dtype=float) for a in val)
    if model.W is None:
        model.init_params(Xtr.shape[1])
    rng = rng if rng is not None else np.random.default_rng(model.seed)
    best, best_snap, since = np.inf, model.snapshot(), 0
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(Xtr.shape[0])
        for s in range(0, order.size, model.batch):
            sel = order[s:s + model.batch]
            model.train_step(Xtr[sel], ytr[sel])
        val_mse = float(np.mean((model._forward(Xva)[0] - yva) ** 2))
        if not np.isfinite(val_mse):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        history.append(val_mse)
        if callback is not None:
            callback(epoch, model)
        if val_mse < best:
            best, best_snap, since = val_mse, model.snapshot(), 0
        else:
            since += 1
            if since >= patience:
                break
    model.restore(best_snap)
    model.history_ = history
    model.epochs_run_ = len(history)
    model.best_val_mse_ = best
    return model
