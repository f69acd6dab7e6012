"""Exact dense Gaussian-process regression (zero mean).

Cubic in the number of observations; used as the ground truth for the
Kronecker-accelerated paths and capped at ``DENSE_CAP`` points by default.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DimensionError
from .kernels import eval_cross, eval_diag, eval_symmetric
from .linalg import cholesky_with_jitter, symmetric_eig

DENSE_CAP = 4096
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DenseGpProblem:
    X: np.ndarray
    y: np.ndarray
    kernel: object
    hyp: object

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] < 1 or X.shape[0] != y.size:
            raise DimensionError(f"X has {X.shape[0]} rows but y has {y.size} entries")
        if not np.all(np.isfinite(y)):
            raise ConfigError("observations must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.y.size


def _check_cap(problem, cap):
    if problem.n > cap:
        raise ConfigError(f"dense GP limited to {cap} points, got {problem.n}")


def _noisy_cov(problem):
    K = eval_symmetric(problem.kernel, problem.hyp, problem.X)
    K[np.diag_indices_from(K)] += problem.hyp.noise_var
    return K


def log_marginal(problem, cap=DENSE_CAP):
    """Log marginal likelihood through a Cholesky factor of ``sigma^2 I + K``."""
    _check_cap(problem, cap)
    chol = cholesky_with_jitter(_noisy_cov(problem))
    a = chol.solve(problem.y)
    return float(-0.5 * problem.n * LOG_2PI - 0.5 * a @ a - 0.5 * chol.logdet())


def log_marginal_eig(problem, cap=DENSE_CAP):
    """Log marginal likelihood through the eigendecomposition of ``K``."""
    _check_cap(problem, cap)
    V, e = symmetric_eig(eval_symmetric(problem.kernel, problem.hyp, problem.X), "K_nn")
    s2 = problem.hyp.noise_var
    z = V.T @ problem.y
    return float(-0.5 * problem.n * LOG_2PI - 0.5 * np.sum(z * z / (s2 + e))
                 - 0.5 * np.sum(np.log(s2 + e)))


def predict_dense(problem, X_star, cap=DENSE_CAP):
    """Posterior mean and full covariance of the latent function at ``X_star``."""
    _check_cap(problem, cap)
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[:, None]
    if X_star.shape[0] < 1:
        raise DimensionError("need at least one test point")
    chol = cholesky_with_jitter(_noisy_cov(problem))
    Ks = eval_cross(problem.kernel, problem.hyp, X_star, problem.X)
    mean = Ks @ chol.solve_transpose(chol.solve(problem.y))
    A = chol.solve(Ks.T)
    cov = eval_cross(problem.kernel, problem.hyp, X_star, X_star) - A.T @ A
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def predict_dense_var(problem, X_star, cap=DENSE_CAP):
    """Posterior mean and per-point variance without forming the test covariance."""
    _check_cap(problem, cap)
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[:, None]
    chol = cholesky_with_jitter(_noisy_cov(problem))
    Ks = eval_cross(problem.kernel, problem.hyp, X_star, problem.X)
    mean = Ks @ chol.solve_transpose(chol.solve(problem.y))
    A = chol.solve(Ks.T)
    var = eval_diag(problem.kernel, problem.hyp, X_star) - np.sum(A * A, axis=0)
    return mean, var
