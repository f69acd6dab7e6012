"""Kronecker-accelerated variational sparse GP.

Inducing points form a product ``chi_u^1 x ... x chi_u^s`` aligned with the
training subspaces. Every matrix of the collapsed bound then factorizes:

* ``Q^i = K^i_nm L^i`` with ``L^i L^i^T = (K^i_mm)^+``,
* ``Q^i^T Q^i = W_i E_i W_i^T`` so that ``Q_mn Q_nm = (⊗W_i)(⊗E_i)(⊗W_i)^T``,
* ``tr(K_nn - Q_nm Q_mn) = prod tr(K^i_nn) - prod ||Q^i||_F^2``.

The bound costs ``O(N sum m_i + sum n_i m_i^2 + sum m_i^3)``; only per-subspace
matrices are ever formed.

For prediction, with ``z = (⊗ Q^i W_i)^T y`` and ``D = sigma^2 I + ⊗E_i``, the
optimal variational posterior gives

* mean ``k_*m w`` with ``w = K_mm^+ mu = (⊗ L^i W_i) D^{-1} z``,
* latent variance ``k_** - sum_J r_J^2 E_J / D_J`` with ``r = k_*m (⊗ L^i W_i)``.

Both follow from the expanded Woodbury forms of the mean and variance once
``Q_mn Q_nm`` is written in its eigenbasis; the test suite checks them against
the dense reference in :mod:`kronsgp.sparse`.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .dense import DENSE_CAP, LOG_2PI, DenseGpProblem
from .egp import VAR_FLOOR, prior_variance
from .exceptions import ConfigError, DimensionError, NumericalError
from .inputs import ProductInputs
from .kernels import eval_symmetric, factor_cross
from .linalg import (
    KronMatrix,
    cholesky_with_jitter,
    kron_matvec,
    kron_vector,
    rank_one_contract,
    symmetric_eig,
)
from .sparse import InducingSet, optimal_q_direct


def _cartesian(axes):
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


class InducingSubspace:
    """Inducing points of one subspace.

    Either an explicit ``(m_i, d_i)`` point set or, with ``axes``, an inner
    Cartesian grid of ``d_i`` strictly increasing 1-D knot lists (first axis
    slowest in the expanded ordering).
    """

    def __init__(self, points=None, axes=None):
        if (points is None) == (axes is None):
            raise ConfigError("give exactly one of points or axes")
        if axes is not None:
            self.axes = tuple(np.asarray(a, dtype=float).ravel() for a in axes)
            for j, a in enumerate(self.axes):
                if a.size < 1 or not np.all(np.isfinite(a)):
                    raise ConfigError(f"inducing axis {j} must be finite and non-empty")
                if a.size > 1 and np.any(np.diff(a) <= 0):
                    raise ConfigError(f"inducing axis {j} must be strictly increasing")
            self.points = _cartesian(self.axes)
        else:
            self.axes = None
            pts = np.asarray(points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            if pts.ndim != 2 or pts.shape[0] < 1 or not np.all(np.isfinite(pts)):
                raise ConfigError("inducing points must be a finite non-empty (m, d) array")
            if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
                raise ConfigError("inducing subspace contains duplicate points")
            self.points = pts

    @property
    def is_grid(self):
        return self.axes is not None

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def to_dict(self):
        if self.is_grid:
            return {"axes": [a.tolist() for a in self.axes]}
        return {"points": self.points.tolist()}

    @classmethod
    def from_dict(cls, doc):
        if "axes" in doc:
            return cls(axes=doc["axes"])
        if "points" in doc:
            return cls(points=doc["points"])
        raise ConfigError(f"inducing subspace needs 'axes' or 'points': {doc!r}")

    def __repr__(self):
        if self.is_grid:
            return f"InducingSubspace(axes={[a.size for a in self.axes]})"
        return f"InducingSubspace(points={self.points.shape})"


class InducingGrid:
    """Product of per-subspace inducing sets; ``m = prod m_i``."""

    def __init__(self, subspaces):
        self.subspaces = tuple(
            s if isinstance(s, InducingSubspace) else InducingSubspace(points=s)
            for s in subspaces
        )

    @classmethod
    def from_inputs(cls, inputs):
        """Inducing points equal to the training points of every subspace."""
        return cls([InducingSubspace(points=s) for s in inputs.subspaces])

    @property
    def sizes(self):
        return tuple(s.m for s in self.subspaces)

    @property
    def m(self):
        return int(np.prod(self.sizes))

    def as_product_inputs(self, columns):
        return ProductInputs([s.points for s in self.subspaces], columns)

    def to_dict(self):
        return {"subspaces": [s.to_dict() for s in self.subspaces]}

    @classmethod
    def from_dict(cls, doc):
        return cls([InducingSubspace.from_dict(d) for d in doc["subspaces"]])

    def __repr__(self):
        return f"InducingGrid({list(self.subspaces)!r})"


CHOLESKY_COND_MAX = 1e10


def inverse_sqrt(k, name="K_mm"):
    """``L`` with ``L L^T = pinv(k)``. Returns ``(L, n_dropped)``.

    Well-conditioned ``k`` (condition number up to ``CHOLESKY_COND_MAX``) gets
    the plain Cholesky factor ``C^{-T}``. Otherwise eigen-directions with
    eigenvalues below ``size * eps * max`` are dropped, so ``L`` may have fewer
    columns than rows. Jitter is avoided on purpose: it breaks
    ``K_nm L L^T K_mn = K_nn`` when the inducing points are the training points.
    A Cholesky factor that merely succeeds on a near-singular ``k`` is not
    good enough either, as ``tr(Q Q^T)`` can then exceed ``tr(K_nn)``.
    """
    v, e = symmetric_eig(k, name)
    top = e[-1] if e.size else 0.0
    if e.size and e[0] > 0 and top <= e[0] * CHOLESKY_COND_MAX:
        try:
            c = la.cholesky(k, lower=True, check_finite=False)
            eye = np.eye(k.shape[0])
            return la.solve_triangular(c, eye, lower=True, check_finite=False).T, 0
        except la.LinAlgError:
            pass
    keep = e > top * k.shape[0] * np.finfo(float).eps
    return v[:, keep] / np.sqrt(e[keep]), int(e.size - keep.sum())


def inner_grid_kmm(sub, kernel, hyp, cols, amplitude=False):
    """Per-axis covariance factors of an inner-grid subspace.

    Returns ``(KronMatrix, [(L_j, n_dropped_j), ...])`` with
    ``K^i_mm = ⊗_j K^{i,j}`` and ``L_j`` from :func:`inverse_sqrt`; the
    amplitude (if requested) is folded into the first axis.
    """
    if not sub.is_grid:
        raise ConfigError("inner_grid_kmm needs an inducing subspace in axes form")
    if len(sub.axes) != len(cols):
        raise DimensionError(f"{len(sub.axes)} inducing axes for {len(cols)} columns")
    cols = list(cols)
    # a periodic leaf is 1-D and SE splits per column, so every
    # kernel accepted by ProductKernel factorizes per axis
    factors = []
    for j, (a, c) in enumerate(zip(sub.axes, cols)):
        k = factor_cross(kernel, hyp, [c], a[:, None], amplitude=amplitude and j == 0)
        factors.append(0.5 * (k + k.T))
    return KronMatrix(factors), [inverse_sqrt(k, f"inducing axis {j}")
                                 for j, k in enumerate(factors)]


def _khatri_rao_rows(blocks):
    """Row-wise Kronecker product of ``(n, a_j)`` blocks -> ``(n, prod a_j)``."""
    out = blocks[0]
    for b in blocks[1:]:
        out = (out[:, :, None] * b[:, None, :]).reshape(out.shape[0], -1)
    return out


@dataclass(frozen=True)
class SubspaceCache:
    """Per-subspace factorizations used by the bound and by prediction."""

    L: np.ndarray           # (m_i, r_i), L L^T = pinv(K^i_mm)
    Q: np.ndarray           # (n_i, r_i)
    W: np.ndarray           # eigenvectors of Q^T Q
    E: np.ndarray           # eigenvalues of Q^T Q (clamped >= 0)
    trace_knn: float
    dropped: int


def _subspace_cache(kernel, hyp, pts, sub, cols, amplitude):
    if sub.dim != len(cols):
        raise DimensionError(f"inducing subspace has {sub.dim} columns, expected {len(cols)}")
    if sub.is_grid:
        _, factors = inner_grid_kmm(sub, kernel, hyp, cols, amplitude)
        Ls = [f[0] for f in factors]
        per_axis = []
        for j, (a, c, L) in enumerate(zip(sub.axes, cols, Ls)):
            knm = factor_cross(kernel, hyp, [c], pts[:, [j]], a[:, None],
                               amplitude=amplitude and j == 0)
            per_axis.append(knm @ L)
        Q = _khatri_rao_rows(per_axis)
        L = Ls[0]
        for extra in Ls[1:]:
            L = np.kron(L, extra)
        # rank of a Kronecker product is the product of the ranks
        dropped = sub.m - L.shape[1]
    else:
        kmm = factor_cross(kernel, hyp, cols, sub.points, amplitude=amplitude)
        L, dropped = inverse_sqrt(kmm)
        Q = factor_cross(kernel, hyp, cols, pts, sub.points, amplitude=amplitude) @ L
    W, E = symmetric_eig(Q.T @ Q, "Q_mn Q_nm factor")
    trace_knn = pts.shape[0] * (hyp.signal_var if amplitude else 1.0)
    return SubspaceCache(L, Q, W, E, float(trace_knn), int(dropped))


def _check(inputs, y, inducing, kernel):
    y = np.asarray(y, dtype=float).ravel()
    if y.size != inputs.N:
        raise DimensionError(f"expected {inputs.N} observations, got {y.size}")
    if len(inducing.subspaces) != inputs.n_subspaces:
        raise DimensionError(
            f"{len(inducing.subspaces)} inducing subspaces for {inputs.n_subspaces} input subspaces"
        )
    kernel.check_factorizes(inputs.columns)
    return y


def _bound_terms(inputs, y, inducing, kernel, hyp):
    caches = [
        _subspace_cache(kernel, hyp, pts, sub, cols, amplitude=(i == 0))
        for i, (pts, sub, cols) in enumerate(
            zip(inputs.subspaces, inducing.subspaces, inputs.columns))
    ]
    E = kron_vector([c.E for c in caches])
    z = kron_matvec([(c.Q @ c.W).T for c in caches], y)
    s2 = hyp.noise_var
    # dropped inducing directions carry no information, so m counts the kept ones
    n, m = inputs.N, E.size
    trace_resid = (np.prod([c.trace_knn for c in caches])
                   - np.prod([np.sum(c.Q * c.Q) for c in caches]))
    elbo = (-0.5 * n * LOG_2PI - 0.5 * np.dot(y, y) / s2 - 0.5 * (n - m) * np.log(s2)
            + 0.5 * np.sum(z * z / (s2 + E)) / s2
            - 0.5 * np.sum(np.log(s2 + E)) - 0.5 * trace_resid / s2)
    return caches, E, z, float(trace_resid), float(elbo)


def esgp_elbo(inputs, y, inducing, kernel, hyp):
    """Collapsed variational bound with Kronecker-factored inducing algebra."""
    y = _check(inputs, y, inducing, kernel)
    return _bound_terms(inputs, y, inducing, kernel, hyp)[4]


def esgp_trace_residual(inputs, inducing, kernel, hyp):
    """Factored ``tr(K_nn - K_nm K_mm^{-1} K_mn)``."""
    kernel.check_factorizes(inputs.columns)
    caches = [
        _subspace_cache(kernel, hyp, pts, sub, cols, amplitude=(i == 0))
        for i, (pts, sub, cols) in enumerate(
            zip(inputs.subspaces, inducing.subspaces, inputs.columns))
    ]
    return float(np.prod([c.trace_knn for c in caches])
                 - np.prod([np.sum(c.Q * c.Q) for c in caches]))


@dataclass(frozen=True)
class EsgpFit:
    """Trained sparse model: caches plus the ``m``-length prediction weights."""

    inputs: ProductInputs
    kernel: object
    hyp: object
    inducing: InducingGrid
    caches: tuple
    eigenvalues: np.ndarray
    weights: np.ndarray          # pinv(K_mm) mu
    elbo: float
    trace_residual: float
    dropped: int = 0

    def predict(self, X_star):
        return esgp_predict(self, X_star)

    @property
    def LW(self):
        return [c.L @ c.W for c in self.caches]


def esgp_fit(inputs, y, inducing, kernel, hyp, verify=False):
    """Factorize, evaluate the bound and reduce the data to prediction weights.

    Parameters
    ----------
    verify : bool
        Cross-check the weights against the dense optimal posterior. Below
        ``DENSE_CAP`` observations a mismatch falls back to the dense weights
        with a warning; above it a mismatch cannot be checked and verification
        raises instead.
    """
    y = _check(inputs, y, inducing, kernel)
    caches, E, z, trace_resid, elbo = _bound_terms(inputs, y, inducing, kernel, hyp)
    s2 = hyp.noise_var
    # element-wise scaling by diag((sigma^2 I + E)^{-1}) in the W basis
    coeffs = z / (s2 + E)
    weights = kron_matvec([c.L @ c.W for c in caches], coeffs)
    if verify:
        weights = _verified_weights(inputs, y, inducing, kernel, hyp, weights)
    dropped = inducing.m - E.size
    return EsgpFit(inputs, kernel, hyp, inducing, tuple(caches), E, weights, elbo,
                   trace_resid, dropped)


def _verified_weights(inputs, y, inducing, kernel, hyp, weights, rtol=1e-6):
    if inputs.N > DENSE_CAP or inducing.m > DENSE_CAP:
        raise NumericalError("weight verification needs a problem under the dense cap")
    Z = inducing.as_product_inputs(inputs.columns).expand()
    problem = DenseGpProblem(inputs.expand(), y, kernel, hyp)
    q = optimal_q_direct(problem, InducingSet(Z))
    c = cholesky_with_jitter(eval_symmetric(kernel, hyp, Z))
    dense = c.solve_transpose(c.solve(q.mean))
    scale = max(np.abs(dense).max(), 1e-300)
    if np.abs(dense - weights).max() > rtol * scale:
        warnings.warn("fast prediction weights disagree with the dense posterior; "
                      "using dense weights", RuntimeWarning)
        return dense
    return weights


def _test_cross(fit, blocks):
    return [
        factor_cross(fit.kernel, fit.hyp, cols, b, sub.points, amplitude=(i == 0))
        for i, (b, sub, cols) in enumerate(
            zip(blocks, fit.inducing.subspaces, fit.inputs.columns))
    ]


def esgp_predict(fit, X_star):
    """Predictive mean and latent variance at test points.

    ``X_star`` is a :class:`ProductInputs` (outputs in its global ordering) or
    an ``(t, d)`` array of arbitrary composite points.
    """
    s2 = fit.hyp.noise_var
    shrink = fit.eigenvalues / (s2 + fit.eigenvalues)
    LW = fit.LW
    if isinstance(X_star, ProductInputs):
        if X_star.columns != fit.inputs.columns:
            raise DimensionError("test grid columns differ from training columns")
        cross = _test_cross(fit, X_star.subspaces)
        mean = kron_matvec(cross, fit.weights)
        rot = [(k @ lw) ** 2 for k, lw in zip(cross, LW)]
        var = prior_variance(fit.kernel, fit.hyp, X_star.N) - kron_matvec(rot, shrink)
    else:
        blocks = fit.inputs.split(X_star)
        cross = _test_cross(fit, blocks)
        mean = rank_one_contract(fit.weights, cross)
        rot = [(k @ lw) ** 2 for k, lw in zip(cross, LW)]
        var = prior_variance(fit.kernel, fit.hyp, blocks[0].shape[0]) - rank_one_contract(
            shrink, rot)
    return mean, np.maximum(var, VAR_FLOOR)
