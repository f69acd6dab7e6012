"""Exact GP on product-structured inputs via per-subspace eigendecompositions.

With ``K_nn = K_1 ⊗ ... ⊗ K_s`` and ``K_i = V_i E_i V_i^T`` the log marginal
likelihood and the predictive equations only need the small factors, the
global eigenvalues ``⊗ E_i`` and Kronecker mat-vecs; no ``N x N`` matrix is
ever formed. Subspaces may be unstructured point clouds (``d_i > 1``), in
which case their factor is simply a dense ``n_i x n_i`` kernel matrix.
"""

from dataclasses import dataclass

import numpy as np

from .dense import LOG_2PI
from .exceptions import DimensionError
from .inputs import ProductInputs
from .kernels import factor_cross
from .linalg import (
    EigenFactorization,
    kron_matvec,
    rank_one_contract,
    symmetric_eig,
)

VAR_FLOOR = 1e-12


def subspace_covariances(kernel, hyp, inputs):
    """Per-subspace covariance factors ``K_i``; ``sigma_f^2`` sits in factor 1."""
    kernel.check_factorizes(inputs.columns)
    factors = []
    for i, (pts, cols) in enumerate(zip(inputs.subspaces, inputs.columns)):
        k = factor_cross(kernel, hyp, cols, pts, amplitude=(i == 0))
        factors.append(0.5 * (k + k.T))
    return factors


def subspace_cross(kernel, hyp, inputs, blocks):
    """Per-subspace cross-covariances between test blocks and training points."""
    return [
        factor_cross(kernel, hyp, cols, b, pts, amplitude=(i == 0))
        for i, (b, pts, cols) in enumerate(zip(blocks, inputs.subspaces, inputs.columns))
    ]


def prior_variance(kernel, hyp, n_points):
    # stationary leaves: k(x, x) = sigma_f^2 everywhere
    return np.full(n_points, hyp.signal_var)


@dataclass(frozen=True)
class EgpFit:
    """Cached eigen-factorization and prediction weights of an exact product GP."""

    inputs: ProductInputs
    kernel: object
    hyp: object
    eig: EigenFactorization
    eigenvalues: np.ndarray
    weights: np.ndarray
    log_marginal: float

    def predict(self, X_star):
        return egp_predict_fit(self, X_star)


def _check_y(inputs, y):
    y = np.asarray(y, dtype=float).ravel()
    if y.size != inputs.N:
        raise DimensionError(f"expected {inputs.N} observations, got {y.size}")
    return y


def _factorize(inputs, kernel, hyp):
    vectors, values = [], []
    for i, k in enumerate(subspace_covariances(kernel, hyp, inputs)):
        v, e = symmetric_eig(k, f"subspace {i} covariance")
        vectors.append(v)
        values.append(e)
    return EigenFactorization(tuple(vectors), tuple(values))


def _rotated(inputs, y, kernel, hyp):
    eig = _factorize(inputs, kernel, hyp)
    e = eig.global_eigenvalues()
    y_rot = eig.to_eigenbasis(_check_y(inputs, y))
    scaled = y_rot / (hyp.noise_var + e)
    lml = (-0.5 * inputs.N * LOG_2PI - 0.5 * np.dot(y_rot, scaled)
           - 0.5 * np.sum(np.log(hyp.noise_var + e)))
    return eig, e, scaled, float(lml)


def egp_fit(inputs, y, kernel, hyp):
    """Eigendecompose every factor and solve for the prediction weights."""
    eig, e, scaled, lml = _rotated(inputs, y, kernel, hyp)
    return EgpFit(inputs, kernel, hyp, eig, e, eig.from_eigenbasis(scaled), lml)


def egp_log_marginal(inputs, y, kernel, hyp):
    """Exact log marginal likelihood on a product grid."""
    return _rotated(inputs, y, kernel, hyp)[3]


def egp_predict_fit(fit, X_star):
    """Predictive mean and latent variance from a cached :class:`EgpFit`.

    ``X_star`` is either a :class:`ProductInputs` (outputs follow its global
    ordering) or an ``(t, d)`` array of arbitrary composite points.
    """
    inputs, s2 = fit.inputs, fit.hyp.noise_var
    inv_diag = 1.0 / (s2 + fit.eigenvalues)
    if isinstance(X_star, ProductInputs):
        if X_star.columns != inputs.columns:
            raise DimensionError("test grid columns differ from training columns")
        cross = subspace_cross(fit.kernel, fit.hyp, inputs, X_star.subspaces)
        mean = kron_matvec(cross, fit.weights)
        rot = [(c @ v) ** 2 for c, v in zip(cross, fit.eig.vectors)]
        var = prior_variance(fit.kernel, fit.hyp, X_star.N) - kron_matvec(rot, inv_diag)
    else:
        blocks = inputs.split(X_star)
        cross = subspace_cross(fit.kernel, fit.hyp, inputs, blocks)
        mean = rank_one_contract(fit.weights, cross)
        rot = [(c @ v) ** 2 for c, v in zip(cross, fit.eig.vectors)]
        var = prior_variance(fit.kernel, fit.hyp, blocks[0].shape[0]) - rank_one_contract(
            inv_diag, rot
        )
    return mean, np.maximum(var, VAR_FLOOR)


def egp_predict(inputs, y, kernel, hyp, X_star):
    """One-shot fit and predict."""
    return egp_predict_fit(egp_fit(inputs, y, kernel, hyp), X_star)
