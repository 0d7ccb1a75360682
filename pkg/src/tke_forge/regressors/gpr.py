"""Gaussian process regression with an RBF + White + RationalQuadratic
kernel, fitted by maximizing the log marginal likelihood.

Hyperparameters live in log space as
``theta = [log rbf_length, log white_noise, log rq_length, log rq_alpha]``.
A fixed ``alpha`` jitter is added to the diagonal on top of the white
noise term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, lapack, solve_triangular

from ..errors import ConditioningError, ParameterError
from .trees import _check_X

THETA_NAMES = ("rbf_length_scale", "white_noise_level", "rq_length_scale", "rq_alpha")
LOG_BOUNDS = (math.log(1e-5), math.log(1e5))
_LOG_2PI = math.log(2 * math.pi)


def _sqdist(A, B=None):
    if B is None:
        sq = np.einsum("ij,ij->i", A, A)
        D = sq[:, None] + sq[None, :] - 2.0 * A @ A.T
        np.fill_diagonal(D, 0.0)
        D = 0.5 * (D + D.T)
    else:
        D = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :] - 2.0 * A @ B.T
    return np.maximum(D, 0.0)


def _parts(theta, D):
    ell, _, ell_rq, a_rq = np.exp(theta[0]), np.exp(theta[1]), np.exp(theta[2]), np.exp(theta[3])
    k_rbf = np.exp(-0.5 * D / ell ** 2)
    base = 1.0 + D / (2.0 * a_rq * ell_rq ** 2)
    log_base = np.log(base)
    k_rq = np.exp(-a_rq * log_base)
    return k_rbf, k_rq, base, log_base


def kernel(theta, A, B=None):
    """Cross-covariance of the kernel stack. With ``B is None`` the
    training covariance is returned, white noise included."""
    theta = np.asarray(theta, dtype=float)
    D = _sqdist(A, B)
    k_rbf, k_rq, _, _ = _parts(theta, D)
    K = k_rbf + k_rq
    if B is None:
        K[np.diag_indices_from(K)] += np.exp(theta[1])
    return K


def kernel_diag(theta, A):
    return np.full(A.shape[0], 2.0 + np.exp(theta[1]))


def _chol(C, jitter):
    try:
        return cholesky(C, lower=True, check_finite=False)
    except LinAlgError:
        raise ConditioningError(
            f"covariance not positive definite at jitter {jitter:g}", jitter=jitter
        ) from None


def lml_from_cov(C, r):
    """Gaussian log marginal likelihood of residual vector ``r`` under
    covariance ``C``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    r = np.asarray(r, dtype=float).ravel()
    L = _chol(C, 0.0)
    a = cho_solve((L, True), r, check_finite=False)
    return float(-0.5 * r @ a - np.log(np.diag(L)).sum() - 0.5 * r.size * _LOG_2PI)


def _lml_from_sqdist(theta, D, r, alpha, want_grad):
    theta = np.asarray(theta, dtype=float)
    k_rbf, k_rq, base, log_base = _parts(theta, D)
    noise = np.exp(theta[1])
    K = k_rbf + k_rq
    K[np.diag_indices_from(K)] += noise + alpha
    L = _chol(K, alpha)
    a = cho_solve((L, True), r, check_finite=False)
    lml = float(-0.5 * r @ a - np.log(np.diag(L)).sum() - 0.5 * r.size * _LOG_2PI)
    if not want_grad:
        return lml

    # lower triangle of K^-1; the strict upper part stays zero
    Kinv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise ConditioningError(f"inverse from Cholesky failed (info={info})", jitter=alpha)
    diag_inv = np.diag(Kinv)

    def half_trace(M):
        # 0.5 tr((a a^T - K^-1) M) for symmetric M from the lower triangle only
        tr_inv = 2.0 * np.einsum("ij,ij->", Kinv, M) - diag_inv @ np.diag(M)
        return 0.5 * (a @ M @ a - tr_inv)

    ell_rbf, ell_rq, a_rq = np.exp(theta[0]), np.exp(theta[2]), np.exp(theta[3])
    grad = np.array([
        half_trace(k_rbf * (D / ell_rbf ** 2)),
        0.5 * noise * (a @ a - diag_inv.sum()),
        half_trace((D / ell_rq ** 2) * k_rq / base),
        half_trace(k_rq * a_rq * ((base - 1.0) / base - log_base)),
    ])
    return lml, grad


def _residual(y, center):
    r = np.asarray(y, dtype=float)
    return r - r.mean() if center else r


def gpr_lml(theta, X, y, alpha=0.01, center=True):
    """Log marginal likelihood of ``y`` (centred on its mean unless
    ``center=False``) under the kernel stack plus ``alpha`` jitter."""
    return _lml_from_sqdist(theta, _sqdist(np.asarray(X, dtype=float)), _residual(y, center),
                            alpha, False)


def gpr_lml_grad(theta, X, y, alpha=0.01, center=True):
    """LML and its gradient with respect to the log-hyperparameters."""
    return _lml_from_sqdist(theta, _sqdist(np.asarray(X, dtype=float)), _residual(y, center),
                            alpha, True)


@dataclass
class AscentTrace:
    start_theta: np.ndarray
    start_lml: float
    theta: np.ndarray
    lml: float
    iterations: int


def gradient_ascent(fun_grad, fun, theta0, max_iter=100, gtol=1e-5, ftol=1e-9, max_step=3.0):
    """Ascent along a BFGS-preconditioned gradient direction with Armijo
    backtracking, clipped to ``LOG_BOUNDS``.

    A step is only taken when it increases the objective, so the result is
    never worse than the start. The direction falls back to the plain
    gradient whenever the curvature estimate stops giving an ascent
    direction.
    """
    theta = np.clip(np.asarray(theta0, dtype=float), *LOG_BOUNDS)
    f, g = fun_grad(theta)
    start = (theta.copy(), f)
    B = np.eye(theta.size)  # inverse of the negated Hessian
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            break
        p = B @ g
        if not g @ p > 0:
            B = np.eye(theta.size)
            p = g.copy()
        norm = np.linalg.norm(p)
        if norm > max_step:
            p *= max_step / norm
        t = 1.0
        accepted = False
        while t > 1e-10:
            cand = np.clip(theta + t * p, *LOG_BOUNDS)
            delta = cand - theta
            if not delta.any():
                break
            try:
                fc = fun(cand)
            except ConditioningError:
                fc = -np.inf
            if fc > f and fc >= f + 1e-4 * (g @ delta):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        f_old = f
        theta = cand
        f, g_new = fun_grad(theta)
        s_vec, y_vec = delta, g - g_new  # y = -(change in gradient) for ascent
        sy = s_vec @ y_vec
        if sy > 1e-12:
            rho = 1.0 / sy
            V = np.eye(theta.size) - rho * np.outer(s_vec, y_vec)
            B = V @ B @ V.T + rho * np.outer(s_vec, s_vec)
        g = g_new
        if f - f_old <= ftol * max(1.0, abs(f)):
            break
    return AscentTrace(start[0], start[1], theta, f, it)


class GPR:
    def __init__(self, length_scale=1.0, noise_level=1.0, rq_length_scale=1.0, rq_alpha=1.0,
                 alpha=0.01, restarts=3, optimize=True, max_n=4000, opt_max_n=1000,
                 max_iter=100, normalize_y=True, seed=0):
        if min(length_scale, noise_level, rq_length_scale, rq_alpha) <= 0:
            raise ParameterError("kernel hyperparameters must be positive")
        if alpha < 0:
            raise ParameterError("alpha must be >= 0")
        if restarts < 1 or max_n < 2 or opt_max_n < 2:
            raise ParameterError("restarts, max_n and opt_max_n must be positive")
        self.length_scale = length_scale
        self.noise_level = noise_level
        self.rq_length_scale = rq_length_scale
        self.rq_alpha = rq_alpha
        self.alpha = float(alpha)
        self.restarts = int(restarts)
        self.optimize = optimize
        self.max_n = int(max_n)
        self.opt_max_n = int(opt_max_n)
        self.max_iter = int(max_iter)
        self.normalize_y = normalize_y
        self.seed = seed

    @property
    def theta0(self):
        return np.log([self.length_scale, self.noise_level, self.rq_length_scale, self.rq_alpha])

    def _subsample(self, n, cap, rng):
        if n <= cap:
            return np.arange(n)
        return np.sort(rng.choice(n, cap, replace=False))

    def fit(self, X, y):
        X = _check_X(X)
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng(self.seed)
        keep = self._subsample(X.shape[0], self.max_n, rng)
        X, y = X[keep], y[keep]
        constant = bool(np.all(y == y[0]))
        self.y_mean_ = float(y[0]) if constant else float(y.mean())
        sd = float(y.std())
        self.y_scale_ = sd if self.normalize_y and not constant else 1.0
        r = (y - self.y_mean_) / self.y_scale_

        self.traces_ = []
        theta = self.theta0
        if self.optimize:
            sub = self._subsample(X.shape[0], self.opt_max_n, rng)
            Do, ro = _sqdist(X[sub]), r[sub]

            def fg(t):
                return _lml_from_sqdist(t, Do, ro, self.alpha, True)

            def f(t):
                return _lml_from_sqdist(t, Do, ro, self.alpha, False)

            starts = [self.theta0] + [
                rng.uniform(math.log(0.1), math.log(10.0), 4) for _ in range(self.restarts - 1)
            ]
            for s in starts:
                try:
                    self.traces_.append(gradient_ascent(fg, f, s, max_iter=self.max_iter))
                except ConditioningError:
                    continue
            if not self.traces_:
                raise ConditioningError(
                    f"every restart failed Cholesky at jitter {self.alpha:g}", jitter=self.alpha
                )
            theta = max(self.traces_, key=lambda tr: tr.lml).theta
        self.theta_ = np.asarray(theta, dtype=float)

        K = kernel(self.theta_, X)
        K[np.diag_indices_from(K)] += self.alpha
        self.L_ = _chol(K, self.alpha)
        self.alpha_vec_ = cho_solve((self.L_, True), r, check_finite=False)
        self.X_ = X
        self.n_features_ = X.shape[1]
        self.lml_ = float(
            -0.5 * r @ self.alpha_vec_ - np.log(np.diag(self.L_)).sum() - 0.5 * r.size * _LOG_2PI
        )
        return self

    @property
    def hyperparameters(self):
        return dict(zip(THETA_NAMES, np.exp(self.theta_).tolist()))

    def predict(self, X, return_std=False):
        X = _check_X(X, self.n_features_)
        mean = np.empty(X.shape[0])
        var = np.empty(X.shape[0]) if return_std else None
        for s in range(0, X.shape[0], 2048):
            Ks = kernel(self.theta_, X[s:s + 2048], self.X_)
            mean[s:s + 2048] = Ks @ self.alpha_vec_
            if return_std:
                v = solve_triangular(self.L_, Ks.T, lower=True, check_finite=False)
                var[s:s + 2048] = kernel_diag(self.theta_, X[s:s + 2048]) - np.einsum("ij,ij->j", v, v)
        mean = self.y_mean_ + self.y_scale_ * mean
        if not return_std:
            return mean
        return mean, self.y_scale_ * np.sqrt(np.maximum(var, 0.0))
