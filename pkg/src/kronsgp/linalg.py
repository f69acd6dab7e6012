"""Kronecker-structured linear algebra.

Ordering convention: in ``A_1 ⊗ A_2 ⊗ ... ⊗ A_s`` the first factor indexes the
slowest-varying coordinate of the flattened vector, which is exactly the
layout produced by ``np.kron`` and by C-order ``reshape``.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg as la

from .exceptions import DimensionError, JitterError, NotPSDError

SYMMETRY_TOL = 1e-10
EIG_CLAMP_TOL = 1e-10


def _as_factor_list(factors):
    factors = [np.atleast_2d(np.asarray(f, dtype=float)) for f in factors]
    if not factors:
        raise DimensionError("at least one Kronecker factor is required")
    return factors


def kron_matvec(factors, v):
    """Compute ``(A_1 ⊗ ... ⊗ A_s) v`` without forming the product.

    Parameters
    ----------
    factors : sequence of array_like
        Factor matrices, factor ``i`` of shape ``(r_i, c_i)``.
    v : array_like
        Vector of length ``prod(c_i)``, or a matrix of shape
        ``(prod(c_i), k)`` whose columns are multiplied independently.

    Returns
    -------
    ndarray
        Length ``prod(r_i)`` (or shape ``(prod(r_i), k)`` for matrix input).
    """
    factors = _as_factor_list(factors)
    v = np.asarray(v, dtype=float)
    vector_input = v.ndim == 1
    cols = [f.shape[1] for f in factors]
    n_in = int(np.prod(cols))
    if v.shape[0] != n_in:
        offending = next((i for i, c in enumerate(cols) if n_in % c), len(cols) - 1)
        raise DimensionError(
            f"vector length {v.shape[0]} does not match product of factor column "
            f"counts {cols} (= {n_in}); check factor {offending} with shape "
            f"{factors[offending].shape}"
        )
    k = 1 if vector_input else v.shape[1]
    # batch axis first, then the Kronecker coordinates
    x = v.reshape(n_in, k).T.reshape(k, n_in)
    for a in factors:
        x = x.reshape(k, a.shape[1], -1)
        x = np.matmul(a, x)
        # cycle the freshly produced axis to the back
        x = x.transpose(0, 2, 1).reshape(k, -1)
    return x[0] if vector_input else x.T.copy()


def kron_dense(factors):
    """Materialize the Kronecker product. Only for tests and small problems."""
    return reduce(np.kron, _as_factor_list(factors))


def kron_diag(factors):
    """Diagonal of a Kronecker product of square factors."""
    return reduce(np.kron, [np.diag(f) for f in _as_factor_list(factors)])


def kron_vector(vectors):
    """Kronecker product of 1-D vectors (e.g. global eigenvalue products)."""
    return reduce(lambda a, b: np.multiply.outer(a, b).ravel(),
                  [np.asarray(x, dtype=float).ravel() for x in vectors])


def kron_trace(factors):
    """Trace of ``⊗ A_i``, i.e. the product of factor traces."""
    factors = _as_factor_list(factors)
    for i, f in enumerate(factors):
        if f.shape[0] != f.shape[1]:
            raise DimensionError(f"factor {i} is not square: shape {f.shape}")
    return float(np.prod([np.trace(f) for f in factors]))


def rank_one_contract(tensor, rows, max_elements=1 << 22):
    """Contract a Kronecker-ordered vector with rank-one row products.

    For every ``t`` returns ``sum_J tensor[J] * prod_i rows[i][t, j_i]``, which is
    ``(⊗_i rows[i][t]) · tensor``. This is the per-point kernel-row action used
    for arbitrary (non-grid) test points.

    Parameters
    ----------
    tensor : ndarray
        Length ``prod(n_i)`` vector in the global ordering.
    rows : sequence of ndarray
        ``rows[i]`` has shape ``(t, n_i)``.
    """
    rows = [np.atleast_2d(np.asarray(r, dtype=float)) for r in rows]
    sizes = [r.shape[1] for r in rows]
    t = rows[0].shape[0]
    if any(r.shape[0] != t for r in rows):
        raise DimensionError("all row blocks must have the same number of points")
    x = np.asarray(tensor, dtype=float)
    if x.size != int(np.prod(sizes)):
        raise DimensionError(f"tensor of size {x.size} does not match row sizes {sizes}")
    # contract the largest axis first: the intermediate is t * N / max(n_i)
    perm = sorted(range(len(sizes)), key=lambda i: -sizes[i])
    x = x.reshape(sizes).transpose(perm).reshape(sizes[perm[0]], -1)
    rows = [rows[i] for i in perm]
    chunk = max(1, max_elements // max(x.shape[1], 1))
    out = np.empty(t)
    for lo in range(0, t, chunk):
        hi = min(lo + chunk, t)
        acc = rows[0][lo:hi] @ x
        for r in rows[1:]:
            acc = np.einsum("tj,tjr->tr", r[lo:hi], acc.reshape(hi - lo, r.shape[1], -1))
        out[lo:hi] = acc.reshape(hi - lo)
    return out


def check_symmetric(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    scale = max(np.abs(m).max(initial=0.0), 1.0e-300)
    if np.abs(m - m.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise DimensionError(f"{name} is not symmetric")
    return m


class KronMatrix:
    """A square symmetric matrix stored as its Kronecker factors."""

    def __init__(self, factors):
        self.factors = tuple(
            check_symmetric(f, f"factor {i}") for i, f in enumerate(_as_factor_list(factors))
        )

    @property
    def sizes(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def shape(self):
        n = int(np.prod(self.sizes))
        return (n, n)

    def matvec(self, v):
        return kron_matvec(self.factors, v)

    def trace(self):
        return kron_trace(self.factors)

    def diag(self):
        return kron_diag(self.factors)

    def todense(self):
        return kron_dense(self.factors)

    def __repr__(self):
        return f"KronMatrix(sizes={self.sizes})"


@dataclass(frozen=True)
class EigenFactorization:
    """Per-factor eigenpairs; the global spectrum is all cross-factor products."""

    vectors: tuple
    values: tuple

    def global_eigenvalues(self):
        return kron_vector(self.values)

    def to_eigenbasis(self, v):
        """Apply ``(⊗ V_i)^T`` to ``v``."""
        return kron_matvec([q.T for q in self.vectors], v)

    def from_eigenbasis(self, v):
        """Apply ``⊗ V_i`` to ``v``."""
        return kron_matvec(self.vectors, v)


def symmetric_eig(m, name="matrix"):
    """Eigendecomposition with roundoff-negative eigenvalues clamped to zero."""
    m = 0.5 * (m + m.T)
    values, vectors = np.linalg.eigh(m)
    top = max(values[-1], 0.0) if values.size else 0.0
    floor = -EIG_CLAMP_TOL * top
    if values.size and values[0] < floor:
        raise NotPSDError(
            f"{name} is not positive semi-definite (eigenvalue {values[0]:.3e})",
            values[0],
        )
    return vectors, np.maximum(values, 0.0)


def kron_eigendecompose(k):
    """Eigendecompose every factor of a :class:`KronMatrix`."""
    if not isinstance(k, KronMatrix):
        k = KronMatrix(k)
    vectors, values = [], []
    for i, f in enumerate(k.factors):
        v, e = symmetric_eig(f, f"factor {i}")
        vectors.append(v)
        values.append(e)
    return EigenFactorization(tuple(vectors), tuple(values))


@dataclass(frozen=True)
class LowerTriangular:
    """Cholesky factor ``L`` with ``L L^T = m + jitter I``."""

    matrix: np.ndarray
    jitter: float = 0.0

    @property
    def side(self):
        return self.matrix.shape[0]

    def solve(self, b):
        """Solve ``L x = b``."""
        return la.solve_triangular(self.matrix, b, lower=True, check_finite=False)

    def solve_transpose(self, b):
        """Solve ``L^T x = b``."""
        return la.solve_triangular(self.matrix, b, lower=True, trans="T", check_finite=False)

    def inverse_transpose(self):
        """``L^{-T}``; its outer product with itself is the inverse of ``L L^T``."""
        return self.solve_transpose(np.eye(self.side))

    def logdet(self):
        """Log-determinant of ``L L^T``."""
        return 2.0 * np.log(np.diag(self.matrix)).sum()


def cholesky_with_jitter(m, initial=1e-10, maximum=1e-4, growth=10.0):
    """Lower Cholesky factor, escalating diagonal jitter on failure.

    The first attempt uses no jitter. Subsequent attempts add
    ``initial * mean(diag(m))`` and multiply by ``growth`` until
    ``maximum * mean(diag(m))`` has been tried.
    """
    m = check_symmetric(m)
    try:
        return LowerTriangular(la.cholesky(m, lower=True, check_finite=False), 0.0)
    except la.LinAlgError:
        pass
    scale = float(np.mean(np.diag(m)))
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    rel = initial
    jitter = rel * scale
    eye = np.eye(m.shape[0])
    while rel <= maximum * (1 + 1e-9):
        jitter = rel * scale
        try:
            return LowerTriangular(
                la.cholesky(m + jitter * eye, lower=True, check_finite=False), jitter
            )
        except la.LinAlgError:
            rel *= growth
    raise JitterError(f"Cholesky failed with maximum jitter {jitter:.3e}", jitter)
