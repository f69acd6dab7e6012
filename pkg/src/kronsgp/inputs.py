"""Training inputs laid out as a Cartesian product of orthogonal subspaces."""

import numpy as np

from .exceptions import ConfigError, DimensionError, IncompleteProductError


def _as_points(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty (n, d) array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} contains non-finite coordinates")
    return a


class ProductInputs:
    """Points ``chi^1 x ... x chi^s`` in a fixed global ordering.

    Composite point ``(j_1, ..., j_s)`` sits at the C-order flat index of the
    multi-index, so subspace 1 varies slowest. This matches ``np.kron`` and
    :func:`kronsgp.linalg.kron_matvec`.

    Parameters
    ----------
    subspaces : sequence of array_like
        ``subspaces[i]`` is an ``(n_i, d_i)`` point set (1-D arrays are
        treated as ``d_i = 1``).
    columns : sequence of sequence of int, optional
        Global input column of every local column. Defaults to consecutive
        blocks in subspace order.
    """

    def __init__(self, subspaces, columns=None):
        self.subspaces = tuple(_as_points(s, f"subspace {i}") for i, s in enumerate(subspaces))
        if not self.subspaces:
            raise DimensionError("need at least one subspace")
        if columns is None:
            columns, start = [], 0
            for s in self.subspaces:
                columns.append(tuple(range(start, start + s.shape[1])))
                start += s.shape[1]
        self.columns = tuple(tuple(int(c) for c in cols) for cols in columns)
        if len(self.columns) != len(self.subspaces):
            raise DimensionError("one column list per subspace is required")
        for i, (s, cols) in enumerate(zip(self.subspaces, self.columns)):
            if s.shape[1] != len(cols):
                raise DimensionError(
                    f"subspace {i} has {s.shape[1]} columns but {len(cols)} column ids"
                )
        flat = sorted(c for cols in self.columns for c in cols)
        if flat != list(range(len(flat))):
            raise DimensionError(f"column ids {flat} must partition 0..d-1")

    @property
    def sizes(self):
        return tuple(s.shape[0] for s in self.subspaces)

    @property
    def n_subspaces(self):
        return len(self.subspaces)

    @property
    def N(self):
        return int(np.prod(self.sizes))

    @property
    def dim(self):
        return sum(len(c) for c in self.columns)

    def __len__(self):
        return self.N

    def __repr__(self):
        return f"ProductInputs(sizes={self.sizes}, columns={self.columns})"

    def expand(self):
        """All composite points as an ``(N, d)`` array in the global ordering."""
        out = np.empty((self.N, self.dim))
        grids = np.indices(self.sizes).reshape(self.n_subspaces, -1)
        for idx, s, cols in zip(grids, self.subspaces, self.columns):
            out[:, list(cols)] = s[idx]
        return out

    def split(self, X):
        """Split composite points ``(t, d)`` into per-subspace coordinate blocks."""
        X = _as_points(X, "X")
        if X.shape[1] != self.dim:
            raise DimensionError(f"expected {self.dim} input columns, got {X.shape[1]}")
        return [X[:, list(cols)] for cols in self.columns]

    def subset(self, indices):
        """Sub-product keeping ``indices[i]`` of subspace ``i`` (``None`` keeps all)."""
        subs = []
        for s, idx in zip(self.subspaces, indices):
            subs.append(s if idx is None else s[np.asarray(idx, dtype=int)])
        return ProductInputs(subs, self.columns)

    def subset_values(self, y, indices):
        """Observations of :meth:`subset` taken from the full vector ``y``."""
        t = np.asarray(y, dtype=float).reshape(self.sizes)
        for axis, idx in enumerate(indices):
            if idx is not None:
                t = np.take(t, np.asarray(idx, dtype=int), axis=axis)
        return t.ravel()


def decompose(X, y, columns, row_labels=None):
    """Recover product structure from long-format rows.

    Each subspace's distinct coordinate tuples are sorted lexicographically, so
    the result does not depend on row order.

    Parameters
    ----------
    X : ndarray, shape (N, d)
        One composite point per row.
    y : ndarray, shape (N,)
        Observations.
    columns : sequence of sequence of int
        Column ids of every subspace.
    row_labels : sequence, optional
        Provenance used in error messages (defaults to 0-based row numbers).

    Returns
    -------
    inputs : ProductInputs
    y_ordered : ndarray
        ``y`` permuted into the global ordering.
    order : ndarray
        Row index of every composite point, so ``y_ordered = y[order]``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionError(f"X shape {X.shape} does not match {y.size} observations")
    labels = np.arange(X.shape[0]) if row_labels is None else np.asarray(row_labels)
    bad = ~np.isfinite(X).all(axis=1) | ~np.isfinite(y)
    if bad.any():
        raise ConfigError(f"non-finite value in row {labels[np.argmax(bad)]}")
    subspaces, codes = [], []
    for cols in columns:
        uniq, inv = np.unique(X[:, list(cols)], axis=0, return_inverse=True)
        subspaces.append(uniq)
        codes.append(np.asarray(inv).ravel())
    sizes = tuple(s.shape[0] for s in subspaces)
    N = int(np.prod(sizes))
    flat = np.ravel_multi_index(codes, sizes)
    counts = np.bincount(flat, minlength=N)
    if (counts > 1).any():
        dup = np.flatnonzero(counts > 1)[0]
        rows = labels[flat == dup]
        raise IncompleteProductError(
            f"duplicate composite point {_describe(subspaces, dup, sizes)} "
            f"in rows {[int(r) for r in rows]}"
        )
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0)
        raise IncompleteProductError(
            f"incomplete product: {len(missing)} of {N} composite points absent, first "
            f"missing index {tuple(int(i) for i in np.unravel_index(missing[0], sizes))} at "
            f"{_describe(subspaces, missing[0], sizes)}"
        )
    order = np.empty(N, dtype=int)
    order[flat] = np.arange(N)
    return ProductInputs(subspaces, columns), y[order], order


def _describe(subspaces, flat_index, sizes):
    multi = np.unravel_index(flat_index, sizes)
    return tuple(tuple(float(v) for v in s[j]) for s, j in zip(subspaces, multi))
