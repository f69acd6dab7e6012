"""Dense variational sparse GP (collapsed inducing-point bound).

Two algebraic routes are provided for the bound and for the optimal
variational distribution: a direct one working with ``n``-sided matrices and a
Woodbury one working in the eigenbasis of ``Q_mn Q_nm`` where
``Q_nm = K_nm L_mm`` and ``L_mm L_mm^T = K_mm^{-1}``. They must agree; the
Kronecker-accelerated sparse model is checked against both.
"""

from dataclasses import dataclass

import numpy as np

from .dense import DENSE_CAP, LOG_2PI, DenseGpProblem
from .exceptions import ConfigError, DimensionError
from .kernels import eval_cross, eval_diag, eval_symmetric
from .linalg import cholesky_with_jitter, symmetric_eig


@dataclass(frozen=True)
class InducingSet:
    X: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] < 1:
            raise DimensionError("inducing set must contain at least one point")
        if X.shape[0] > DENSE_CAP:
            raise ConfigError(f"dense inducing set limited to {DENSE_CAP} points")
        if X.shape[0] > 1:
            uniq = np.unique(X, axis=0)
            if uniq.shape[0] != X.shape[0]:
                raise ConfigError("inducing set contains duplicate points")
        object.__setattr__(self, "X", X)

    @property
    def m(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class VariationalPosterior:
    """``q(u) = N(mean, cov)`` over the inducing values."""

    mean: np.ndarray
    cov: np.ndarray


def _blocks(problem, inducing):
    kern, hyp = problem.kernel, problem.hyp
    Kmm = eval_symmetric(kern, hyp, inducing.X)
    Knm = eval_cross(kern, hyp, problem.X, inducing.X)
    return Kmm, Knm, cholesky_with_jitter(Kmm)


def trace_residual(problem, inducing):
    """``tr(K_nn - K_nm K_mm^{-1} K_mn)`` computed densely."""
    Kmm, Knm, chol = _blocks(problem, inducing)
    A = chol.solve(Knm.T)
    return float(np.sum(eval_diag(problem.kernel, problem.hyp, problem.X)) - np.sum(A * A))


def elbo_direct(problem, inducing):
    """Collapsed bound evaluated with the ``n``-sided Nystrom covariance."""
    Kmm, Knm, chol = _blocks(problem, inducing)
    s2 = problem.hyp.noise_var
    A = chol.solve(Knm.T)
    Qnn = A.T @ A
    C = Qnn.copy()
    C[np.diag_indices_from(C)] += s2
    cchol = cholesky_with_jitter(C)
    a = cchol.solve(problem.y)
    tr = np.sum(eval_diag(problem.kernel, problem.hyp, problem.X)) - np.trace(Qnn)
    return float(-0.5 * problem.n * LOG_2PI - 0.5 * a @ a - 0.5 * cchol.logdet()
                 - 0.5 * tr / s2)


def _woodbury_parts(problem, inducing):
    Kmm, Knm, chol = _blocks(problem, inducing)
    L = chol.inverse_transpose()
    Q = Knm @ L
    W, E = symmetric_eig(Q.T @ Q, "Q_mn Q_nm")
    return Kmm, Knm, L, Q, W, E


def elbo_woodbury(problem, inducing):
    """Collapsed bound through the Woodbury identity and ``m``-sided eigenpairs."""
    _, _, _, Q, W, E = _woodbury_parts(problem, inducing)
    y = problem.y
    n, m = problem.n, inducing.m
    s2 = problem.hyp.noise_var
    z = W.T @ (Q.T @ y)
    tr = np.sum(eval_diag(problem.kernel, problem.hyp, problem.X)) - np.sum(Q * Q)
    return float(-0.5 * n * LOG_2PI - 0.5 * (y @ y) / s2 - 0.5 * (n - m) * np.log(s2)
                 + 0.5 * np.sum(z * z / (s2 + E)) / s2
                 - 0.5 * np.sum(np.log(s2 + E)) - 0.5 * tr / s2)


def optimal_q_direct(problem, inducing):
    """Optimal ``q(u)``: ``S = K_mm M^{-1} K_mm``, ``mu = sigma^-2 K_mm M^{-1} K_mn y``.

    with ``M = K_mm + sigma^-2 K_mn K_nm``.
    """
    Kmm, Knm, _ = _blocks(problem, inducing)
    s2 = problem.hyp.noise_var
    M = Kmm + (Knm.T @ Knm) / s2
    mchol = cholesky_with_jitter(0.5 * (M + M.T))

    def msolve(b):
        return mchol.solve_transpose(mchol.solve(b))

    S = Kmm @ msolve(Kmm)
    mu = Kmm @ msolve(Knm.T @ problem.y) / s2
    return VariationalPosterior(mu, 0.5 * (S + S.T))


def optimal_q_woodbury(problem, inducing):
    """Optimal ``q(u)`` written with the Woodbury eigen-terms.

    ``S = K_mm - s^-2 K_mn K_nm + s^-2 K_mn Q W D^-1 W^T Q^T K_nm`` and
    ``mu = s^-2 [K_mn - s^-2 K_mn Q Q^T + s^-2 K_mn Q W D^-1 W^T Q^T Q Q^T] y``
    with ``D = s^2 I + E``.
    """
    Kmm, Knm, _, Q, W, E = _woodbury_parts(problem, inducing)
    s2 = problem.hyp.noise_var
    y = problem.y
    Kmn = Knm.T
    KQW = Kmn @ Q @ W
    S = Kmm - (Kmn @ Knm) / s2 + (KQW / (s2 + E)) @ KQW.T / s2
    Qty = Q.T @ y
    inner = W @ ((W.T @ (Q.T @ (Q @ Qty))) / (s2 + E))
    mu = (Kmn @ y - Kmn @ (Q @ Qty) / s2 + Kmn @ (Q @ inner) / s2) / s2
    return VariationalPosterior(mu, 0.5 * (S + S.T))


def predict_sgp_dense(inducing, posterior, hyp, kernel, X_star):
    """Per-point mean and variance of the latent function under ``q(u)``."""
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[:, None]
    Kmm = eval_symmetric(kernel, hyp, inducing.X)
    chol = cholesky_with_jitter(Kmm)
    Kms = eval_cross(kernel, hyp, inducing.X, X_star)
    A = chol.solve(Kms)
    B = chol.solve_transpose(A)
    mean = B.T @ posterior.mean
    var = (eval_diag(kernel, hyp, X_star) - np.sum(A * A, axis=0)
           + np.sum(B * (posterior.cov @ B), axis=0))
    return mean, var


__all__ = [
    "DenseGpProblem",
    "InducingSet",
    "VariationalPosterior",
    "elbo_direct",
    "elbo_woodbury",
    "optimal_q_direct",
    "optimal_q_woodbury",
    "predict_sgp_dense",
    "trace_residual",
]
