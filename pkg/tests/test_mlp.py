import numpy as np
import pytest

from tke_forge.errors import DivergenceError, ParameterError
from tke_forge.regressors.mlp import MLP, mlp_train, mlp_train_step
from tke_forge.regressors.penalties import norm_chain_check


def _fd_check(activation, seed, l1=0.0):
    rng = np.random.default_rng(seed)
    m = MLP(hidden=(2, 2, 2), l1=l1, l1_layers="all", activation=activation).init_params(2, rng)
    m.params = [p + rng.normal(0, 0.5, p.shape) for p in m.params]
    X = rng.standard_normal((7, 2))
    y = rng.standard_normal(7)
    _, grads = m.loss_and_grad(X, y)
    base = [p.copy() for p in m.params]
    worst = 0.0
    h = 1e-6
    for k, p in enumerate(base):
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in base]
            minus = [q.copy() for q in base]
            plus[k][idx] += h
            minus[k][idx] -= h
            m.params = plus
            fp = m.loss(X, y)
            m.params = minus
            fm = m.loss(X, y)
            fd = (fp - fm) / (2 * h)
            a = grads[k][idx]
            worst = max(worst, abs(a - fd) / max(abs(fd), abs(a), 1e-6))
    m.params = base
    return worst


@pytest.mark.parametrize("seed", range(5))
def test_backprop_matches_fd(seed):
    assert _fd_check("relu", seed) <= 1e-4


def test_backprop_with_l1_and_softmax():
    assert _fd_check("relu", 11, l1=0.3) <= 1e-4
    assert _fd_check("relu_softmax", 12) <= 1e-4


def test_zero_lr_is_noop(rng):
    m = MLP(hidden=(4, 3, 2), learning_rate=0.0).init_params(8, rng)
    before = [p.copy() for p in m.params]
    _, loss = mlp_train_step(m, rng.standard_normal((10, 8)), rng.standard_normal(10))
    assert np.isfinite(loss) and m.t == 1
    assert all(np.array_equal(a, b) for a, b in zip(before, m.params))


def test_adam_step_bound(rng):
    lr = 1e-3
    m = MLP(hidden=(16, 8, 4), learning_rate=lr).init_params(8, rng)
    X, y = rng.standard_normal((42, 8)), 100 * rng.standard_normal(42)
    for _ in range(50):
        before = [p.copy() for p in m.params]
        m.train_step(X, y)
        assert max(np.max(np.abs(a - b)) for a, b in zip(m.params, before)) <= 10 * lr


def test_large_l1_shrinks_weights(rng):
    X, y = rng.standard_normal((84, 8)), rng.standard_normal(84)
    m = MLP(hidden=(8, 8, 8), learning_rate=1e-2, l1=10.0, l1_layers="all").init_params(8, rng)
    start = np.median(np.abs(m.weight_vector()))
    for _ in range(200):
        m.train_step(X, y)
    assert np.median(np.abs(m.weight_vector())) < start


def test_biases_not_penalized(rng):
    m = MLP(hidden=(3, 3, 3), l1=5.0, l1_layers="all").init_params(2, rng)
    m.b = [b + 1.0 for b in m.b]
    assert m.penalty() == pytest.approx(5.0 * sum(np.abs(w).sum() for w in m.W))


def test_default_l1_on_third_layer_only(rng):
    m = MLP().init_params(8, rng)
    assert m.penalty() == pytest.approx(0.01 * np.abs(m.W[2]).sum())


def test_frozen_validation_stops_at_patience_plus_one(rng):
    m = MLP(hidden=(4, 4, 4), learning_rate=0.0, patience=10, epochs=500).init_params(8, rng)
    X, y = rng.standard_normal((50, 8)), rng.standard_normal(50)
    mlp_train(m, (X, y), (X[:10], y[:10]), rng=rng)
    assert m.epochs_run_ == 11
    assert len(set(m.history_)) == 1


def test_improving_validation_runs_all_epochs():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 8))
    y = X @ rng.standard_normal(8)
    m = MLP(hidden=(16, 16, 16), learning_rate=1e-3, batch=200, epochs=25, patience=1, l1=0.0)
    m.init_params(8, rng)
    mlp_train(m, (X, y), (X, y), rng=rng)
    assert np.all(np.diff(m.history_) < 0)
    assert m.epochs_run_ == 25


def test_best_snapshot_restored(rng):
    X, y = rng.standard_normal((120, 8)), rng.standard_normal(120)
    m = MLP(hidden=(32, 32, 32), learning_rate=3e-2, epochs=40, patience=5, l1=0.0)
    m.init_params(8, rng)
    mlp_train(m, (X[:80], y[:80]), (X[80:], y[80:]), rng=rng)
    assert np.mean((m._forward(X[80:])[0] - y[80:]) ** 2) == pytest.approx(m.best_val_mse_, rel=1e-12)


def test_linear_task():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((600, 8))
    y = X[:, 1]
    m = MLP(seed=2).fit(X[:500], y[:500])
    assert np.mean((m.predict(X[500:]) - y[500:]) ** 2) < 0.1 * np.var(y)


def test_norm_chain_every_epoch(rng):
    X = rng.standard_normal((200, 8))
    seen = []
    MLP(epochs=20, seed=0).fit(X, X[:, 0], callback=lambda e, m: seen.append(norm_chain_check(m.weight_vector())))
    assert seen


def test_constant_target_exact(rng):
    m = MLP(seed=0).fit(rng.standard_normal((30, 8)), np.full(30, 0.7))
    assert np.all(m.predict(rng.standard_normal((5, 8))) == 0.7)


def test_divergence_detected(rng):
    m = MLP(hidden=(2, 2, 2)).init_params(2, rng)
    with pytest.raises(DivergenceError):
        m.train_step(np.zeros((3, 2)), np.array([0.0, np.inf, 1.0]))


def test_deterministic(rng):
    X = rng.standard_normal((100, 8))
    a = MLP(epochs=30, seed=3).fit(X, X[:, 2]).predict(X)
    b = MLP(epochs=30, seed=3).fit(X, X[:, 2]).predict(X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kw", [{"hidden": ()}, {"learning_rate": -1}, {"patience": 0},
                                {"activation": "tanh"}, {"val_fraction": 1.0}])
def test_bad_params(kw):
    with pytest.raises(ParameterError):
        MLP(**kw)
