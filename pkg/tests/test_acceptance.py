"""Acceptance suite. Each criterion prints one PASS/FAIL line (also
collected into the terminal summary) and enforces its runtime budget."""

import contextlib
import json
import math
import os
import shutil
import subprocess
import sys
import time

import mpmath as mp
import numpy as np
import pytest
from scipy import stats as sstats

from conftest import ACCEPTANCE
from tke_forge.ingest import COLUMNS, ClusterDataset
from tke_forge.pipeline import EvaluationReport, PipelineConfig, report_table, run
from tke_forge.preprocess import FEATURES, FeatureTable, shuffle_split_cv, split, split_counts
from tke_forge.regressors.boosting import leaf_objective, xgb_leaf_weight
from tke_forge.regressors.gpr import GPR, gpr_lml_grad, gradient_ascent, _lml_from_sqdist, _sqdist
from tke_forge.regressors.mlp import MLP, mlp_train_step
from tke_forge.regressors.penalties import l1_norm, l2_norm, norm_chain_check
from tke_forge.stats import MetricsReport, kde, mae, mse, pearson, r_squared, spearman
from tke_forge.synth import SynthConfig, generate, write_bundle
from tke_forge.turbulence import compute_fluctuations, compute_tke


@contextlib.contextmanager
def criterion(n, title, budget_s=None, prior_s=0.0):
    t0 = time.perf_counter() - prior_s
    status = "FAIL"
    try:
        yield
        dt = time.perf_counter() - t0
        if budget_s is not None:
            assert dt < budget_s, f"criterion {n} took {dt:.1f} s, budget {budget_s} s"
        status = "PASS"
    finally:
        dt = time.perf_counter() - t0
        ACCEPTANCE[n] = (status, title, dt)
        print(f"{status} criterion {n:>2}: {title} ({dt:.2f} s)")


# 1 -------------------------------------------------------------------------

def _wind_dataset(wind):
    n = len(wind)
    data = np.zeros((n, len(COLUMNS)))
    data[:, 0] = np.arange(n) * 0.1
    data[:, 1:4] = wind
    return ClusterDataset("W", data, ("W.csv",), "burn")


def _tke(wind):
    return compute_tke(compute_fluctuations(_wind_dataset(wind))).tke


def _brute_tke(wind):
    n = len(wind)
    means = [math.fsum(wind[i][c] for i in range(n)) / n for c in range(3)]
    return np.array([0.5 * math.fsum((wind[i][c] - means[c]) ** 2 for c in range(3)) for i in range(n)])


def _normwise(a, b):
    # max abs deviation relative to the series scale; per-sample relative
    # error is ill-conditioned where a sample sits at its mean
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def test_c01_tke_oracle():
    rng = np.random.default_rng(1)
    with criterion(1, "TKE brute-force oracle, s^2 scaling, translation invariance", 5):
        worst = [0.0, 0.0, 0.0]
        for _ in range(1000):
            wind = rng.normal(rng.uniform(-5, 5, 3), rng.uniform(0.1, 3, 3), (200, 3))
            got = _tke(wind)
            worst[0] = max(worst[0], _normwise(got, _brute_tke(wind.tolist())))
            s = rng.uniform(0.1, 10)
            worst[1] = max(worst[1], _normwise(_tke(s * wind), s * s * got))
            worst[2] = max(worst[2], _normwise(_tke(wind + rng.uniform(-10, 10, 3)), got))
        assert max(worst) <= 1e-12, worst


# 2 -------------------------------------------------------------------------

def _ranks(x):
    # average ranks by explicit counting
    return np.array([sum(v < xi for v in x) + (sum(v == xi for v in x) + 1) / 2 for xi in x])


def _pearson_oracle(x, y):
    mx, my = math.fsum(x) / len(x), math.fsum(y) / len(y)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    return sxy / math.sqrt(math.fsum((a - mx) ** 2 for a in x) * math.fsum((b - my) ** 2 for b in y))


def test_c02_metric_oracles():
    rng = np.random.default_rng(2)
    with criterion(2, "pearson/spearman/r2/mse/mae match direct oracles", 5):
        worst = 0.0
        for i in range(500):
            n = int(rng.integers(3, 51))
            if i % 2:  # integer draws force ties
                x = rng.integers(0, 5, n).astype(float)
                y = rng.integers(0, 5, n).astype(float)
                if np.ptp(x) == 0 or np.ptp(y) == 0:
                    x[0], y[0] = x[0] + 1, y[0] + 1
            else:
                x, y = rng.standard_normal(n), rng.standard_normal(n)
            xl, yl = x.tolist(), y.tolist()
            ybar = math.fsum(xl) / n
            pairs = [
                (pearson(x, y), _pearson_oracle(xl, yl)),
                (spearman(x, y), _pearson_oracle(_ranks(xl).tolist(), _ranks(yl).tolist())),
                (spearman(x, y), sstats.spearmanr(x, y)[0]),
                (r_squared(x, y), 1 - math.fsum((a - b) ** 2 for a, b in zip(xl, yl))
                 / math.fsum((a - ybar) ** 2 for a in xl)),
                (mse(x, y), math.fsum((a - b) ** 2 for a, b in zip(xl, yl)) / n),
                (mae(x, y), math.fsum(abs(a - b) for a, b in zip(xl, yl)) / n),
            ]
            for got, want in pairs:
                worst = max(worst, abs(got - want) / max(1.0, abs(want)))
        assert worst <= 1e-12, worst


# 3 -------------------------------------------------------------------------

def test_c03_kde_normalization():
    rng = np.random.default_rng(3)
    with criterion(3, "KDE non-negative, integrates to 1 +- 1e-3, 3-point oracle", 10):
        for i in range(100):
            n = int(rng.integers(2, 400))
            r = rng.standard_t(3, n) * rng.uniform(0.01, 10) if i % 3 else rng.standard_normal(n)
            c = kde(r)
            assert np.all(c.density >= 0)
            integral = np.trapezoid(c.density, c.grid) if hasattr(np, "trapezoid") else np.trapz(c.density, c.grid)
            assert 0.999 <= integral <= 1.001, integral
        pts = [-0.4, 0.1, 1.3]
        c = kde(pts, bandwidth=0.5)
        for g, d in zip(c.grid[::37], c.density[::37]):
            want = math.fsum(math.exp(-(g - p) ** 2 / (2 * 0.25)) for p in pts) / (3 * 0.5 * math.sqrt(2 * math.pi))
            assert abs(d - want) <= 1e-12


# 4 -------------------------------------------------------------------------

def _mp_lml(theta, X, y, alpha=0.01):
    ell, noise, ellq, aq = [mp.e ** t for t in theta]
    n = len(y)
    ym = mp.fsum(mp.mpf(v) for v in y) / n
    r = mp.matrix([mp.mpf(v) - ym for v in y])
    C = mp.matrix(n, n)
    for i in range(n):
        for j in range(n):
            d2 = mp.fsum((mp.mpf(a) - mp.mpf(b)) ** 2 for a, b in zip(X[i], X[j]))
            C[i, j] = mp.e ** (-d2 / (2 * ell ** 2)) + (1 + d2 / (2 * aq * ellq ** 2)) ** (-aq)
        C[i, i] += noise + mp.mpf(alpha)
    return -(r.T * mp.lu_solve(C, r))[0] / 2 - mp.log(mp.det(C)) / 2 - n * mp.log(2 * mp.pi) / 2


def test_c04_gpr_correctness():
    with criterion(4, "GPR gradient vs 50-digit FD, posterior mean oracle, monotone ascent", 30):
        worst = 0.0
        with mp.workdps(50):
            h = mp.mpf("1e-20")
            for s in range(20):
                rng = np.random.default_rng(400 + s)
                X = rng.standard_normal((10, 3))
                y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(10)
                theta = rng.uniform(math.log(0.3), math.log(3.0), 4)
                _, g = gpr_lml_grad(theta, X, y)
                for k in range(4):
                    tp = [mp.mpf(v) for v in theta]
                    tm = list(tp)
                    tp[k] += h
                    tm[k] -= h
                    fd = float((_mp_lml(tp, X, y) - _mp_lml(tm, X, y)) / (2 * h))
                    worst = max(worst, abs(g[k] - fd) / max(abs(fd), 1e-300))
                # the optimizer never ends below its starting point
                D, r = _sqdist(X), y - y.mean()
                tr = gradient_ascent(lambda t: _lml_from_sqdist(t, D, r, 0.01, True),
                                     lambda t: _lml_from_sqdist(t, D, r, 0.01, False), theta)
                assert tr.lml >= tr.start_lml
        assert worst <= 1e-5, worst

        rng = np.random.default_rng(44)
        X, y, Q = rng.standard_normal((3, 2)), rng.standard_normal(3), rng.standard_normal((5, 2))
        m = GPR(length_scale=0.8, noise_level=0.3, rq_length_scale=1.7, rq_alpha=0.6, optimize=False).fit(X, y)
        theta = m.theta_

        def dense(A, B):
            ell, _, ellq, aq = np.exp(theta)
            d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
            return np.exp(-d2 / (2 * ell ** 2)) + (1 + d2 / (2 * aq * ellq ** 2)) ** -aq

        C = dense(X, X) + (np.exp(theta[1]) + 0.01) * np.eye(3)
        want = y.mean() + dense(Q, X) @ np.linalg.solve(C, y - y.mean())
        assert np.max(np.abs(m.predict(Q) - want)) <= 1e-10

        fitted = GPR(restarts=3, seed=5).fit(rng.standard_normal((60, 3)), rng.standard_normal(60))
        assert all(t.lml >= t.start_lml for t in fitted.traces_)


# 5 -------------------------------------------------------------------------

def test_c05_xgb_leaf_optimality():
    rng = np.random.default_rng(5)
    with criterion(5, "XGB closed-form leaf beats 1e4-point grid; exact l1 dead zone", 5):
        for _ in range(200):
            G = rng.uniform(-20, 20)
            H = rng.uniform(0, 50)
            l1, l2 = rng.uniform(0, 10), rng.uniform(0, 5)
            if H + l2 < 1e-3:
                l2 += 1e-3
            w = xgb_leaf_weight(G, H, l1, l2)
            span = 2 * max(1.0, abs(G) / (H + l2))
            grid = np.linspace(-span, span, 10_000)
            assert leaf_objective(w, G, H, l1, l2) <= leaf_objective(grid, G, H, l1, l2).min() + 1e-9
            if abs(G) <= l1:
                assert w == 0.0
        assert xgb_leaf_weight(3.0, 2.0, 3.0, 1.0) == 0.0
        assert xgb_leaf_weight(-2.5, 7.0, 2.5, 0.0) == 0.0


# 6 -------------------------------------------------------------------------

def _mlp_fd(seed):
    rng = np.random.default_rng(seed)
    m = MLP(hidden=(2, 2, 2), l1=0.05, l1_layers="all").init_params(2, rng)
    m.params = [p + rng.normal(0, 0.5, p.shape) for p in m.params]
    X, y = rng.standard_normal((9, 2)), rng.standard_normal(9)
    _, grads = m.loss_and_grad(X, y)
    base = [p.copy() for p in m.params]
    worst, h = 0.0, 1e-6
    for k, p in enumerate(base):
        for idx in np.ndindex(p.shape):
            vals = []
            for sgn in (1, -1):
                trial = [q.copy() for q in base]
                trial[k][idx] += sgn * h
                m.params = trial
                vals.append(m.loss(X, y))
            fd = (vals[0] - vals[1]) / (2 * h)
            worst = max(worst, abs(grads[k][idx] - fd) / max(abs(fd), abs(grads[k][idx]), 1e-6))
    return worst


def test_c06_mlp_gradient():
    with criterion(6, "MLP backprop vs finite differences on 2-2-2-2-1; Adam lr=0 no-op", 10):
        worst = max(_mlp_fd(600 + s) for s in range(20))
        assert worst <= 1e-4, worst
        rng = np.random.default_rng(6)
        m = MLP(hidden=(2, 2, 2), learning_rate=0.0).init_params(2, rng)
        before = [p.copy() for p in m.params]
        for _ in range(5):
            mlp_train_step(m, rng.standard_normal((8, 2)), rng.standard_normal(8))
        assert all(np.array_equal(a, b) for a, b in zip(before, m.params))


# 7 and 10 share one pipeline run --------------------------------------------

@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    write_bundle(generate(SynthConfig(n_samples=5000, plume_gain=3.0, noise_sd=0.05, seed=7)), root)
    cfg = PipelineConfig.from_json(root / "config.json")
    snapshots = {"count": 0, "errors": []}

    def on_epoch(dataset, epoch, model):
        snapshots["count"] += 1
        for w in [model.weight_vector()] + list(model.W):
            try:
                norm_chain_check(w)
            except AssertionError as exc:
                snapshots["errors"].append((epoch, str(exc)))

    old = os.environ.get("TKE_FORGE_THREADS")
    os.environ["TKE_FORGE_THREADS"] = "1"
    t0 = time.perf_counter()
    try:
        report = run(cfg, hooks={"mlp_epoch": on_epoch})
    finally:
        if old is None:
            os.environ.pop("TKE_FORGE_THREADS")
        else:
            os.environ["TKE_FORGE_THREADS"] = old
    return report, time.perf_counter() - t0, snapshots


@pytest.mark.slow
def test_c07_synthetic_end_to_end(synthetic_run):
    report, elapsed, _ = synthetic_run
    with criterion(7, "synthetic pipeline: GPR, XGB test R2 >= 0.85, all six >= 0.6", 300, elapsed):
        r2 = {k: report.r2(k, "SYN", "test") for k in report.models}
        print("test R2:", {k: round(v, 4) for k, v in r2.items()}, f"pipeline {elapsed:.1f} s")
        assert len(r2) == 6
        assert r2["gpr"] >= 0.85 and r2["xgb"] >= 0.85
        assert min(r2.values()) >= 0.6


@pytest.mark.slow
def test_c10_norm_chain(synthetic_run):
    _, _, snaps = synthetic_run
    with criterion(10, "norm chain on every MLP epoch snapshot; exact equality cases"):
        assert snaps["count"] > 0
        assert not snaps["errors"], snaps["errors"][:3]
        for n in (1, 2, 7, 64):
            e = np.zeros(n)
            e[n // 2] = -3.5
            assert l2_norm(e) == l1_norm(e) == 3.5
        # all-equal: bit-exact when sqrt(n) is a float without rounding
        for n in (1, 4, 16, 64, 256):
            for v in (0.25, -1.5, 3.0):
                c = np.full(n, v)
                assert l1_norm(c) == math.sqrt(n) * l2_norm(c) == abs(v) * n
        # otherwise sqrt(n) itself is rounded, so equality holds to an ulp or two
        for n in (2, 3, 7, 10):
            c = np.full(n, 0.25)
            assert abs(l1_norm(c) - math.sqrt(n) * l2_norm(c)) <= 2 * np.spacing(l1_norm(c))


# 8 -------------------------------------------------------------------------

def test_c08_split_arithmetic():
    with criterion(8, "64/16/20 split within one row; five disjoint-complement 80/20 CV partitions", 1):
        for n in (100, 1000, 4321):
            counts = split_counts(n)
            assert sum(counts) == n
            for c, frac in zip(counts, (0.64, 0.16, 0.2)):
                assert abs(c - frac * n) <= 1
            table = FeatureTable(np.zeros((n, len(FEATURES))), np.zeros(n), np.arange(n) * 0.1)
            labels = split(table, seed=3).split
            assert [int(np.sum(labels == s)) for s in ("train", "test", "val")] == list(counts)
            folds = shuffle_split_cv(n, 5, 0.8, seed=3)
            assert len(folds) == 5
            for fit_idx, eval_idx in folds:
                assert np.intersect1d(fit_idx, eval_idx).size == 0
                assert np.array_equal(np.union1d(fit_idx, eval_idx), np.arange(n))
                assert abs(fit_idx.size - 0.8 * n) <= 1 and abs(eval_idx.size - 0.2 * n) <= 1


# 9 -------------------------------------------------------------------------

def _cli():
    exe = shutil.which("tke-forge")
    return [exe] if exe else [sys.executable, "-m", "tke_forge.cli"]


@pytest.mark.slow
def test_c09_determinism(tmp_path):
    write_bundle(generate(SynthConfig(n_samples=1500, seed=9)), tmp_path)
    cfg = tmp_path / "config.json"
    with criterion(9, "tke-forge run twice: byte-identical metrics.csv, equal manifest hash, 1 and 8 threads"):
        outputs = []
        for threads in ("1", "8"):
            env = {**os.environ, "TKE_FORGE_THREADS": threads}
            proc = subprocess.run(_cli() + ["run", "--config", str(cfg)], env=env,
                                  capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            res = tmp_path / "results"
            outputs.append(((res / "metrics.csv").read_bytes(), (res / "manifest.json").read_bytes()))
            shutil.move(res, tmp_path / f"results_{threads}")
        (m1, man1), (m8, man8) = outputs
        assert m1 == m8
        assert json.loads(man1)["config_hash"] == json.loads(man8)["config_hash"]
        assert man1 == man8


# 11 ------------------------------------------------------------------------

def test_c11_report_format():
    with criterion(11, 'report_table renders 0.937 as "93.7" in the GPR/B1 test cell'):
        rep = EvaluationReport(models=["gpr"], datasets=["B1", "B2"])
        for d, t, v in (("B1", 0.937, 0.9), ("B2", 0.5, 0.25)):
            rep.metrics[("gpr", d, "test")] = MetricsReport(t, 0.0, 0.0, 1)
            rep.metrics[("gpr", d, "val")] = MetricsReport(v, 0.0, 0.0, 1)
        lines = report_table(rep).splitlines()
        head = lines[1].split()
        row = lines[2].split()
        assert lines[0].strip() == "Test (%)"
        assert row[0] == "GPR"
        assert row[1 + head.index("B1") - 2] == "93.7"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
