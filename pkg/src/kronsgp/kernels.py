"""Tensor-product covariance kernels and their hyperparameters.

A kernel is a product of leaves. Each leaf claims a set of input columns:

* :class:`SE` -- squared exponential with one length scale per claimed column,
  ``exp(-sum_d (x_d - x'_d)^2 / (2 l_d^2))``;
* :class:`Periodic` -- ``exp(-sin^2(pi |t - t'| / tau) / (2 w^2))`` on one column.

A single signal amplitude ``sigma_f^2`` multiplies the whole product. When a
kernel is split into per-subspace factor matrices the amplitude is folded into
one factor only (see ``amplitude`` arguments below), so the Kronecker product
of the factors reproduces the full kernel exactly.

JSON schema (``version`` 1)::

    {"version": 1,
     "factors": [{"type": "se", "dims": [0, 1]},
                 {"type": "periodic", "dim": 2}]}

Nested ``{"type": "product", "factors": [...]}`` nodes are accepted and
flattened in traversal order.
"""

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DimensionError

NOISE_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class SE:
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.dims:
            raise ConfigError("SE leaf needs at least one dimension")

    @property
    def slot_names(self):
        return tuple(f"lengthscale[{d}]" for d in self.dims)

    def to_dict(self):
        return {"type": "se", "dims": list(self.dims)}


@dataclass(frozen=True)
class Periodic:
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def dims(self):
        return (self.dim,)

    @property
    def slot_names(self):
        return (f"width[{self.dim}]", f"period[{self.dim}]")

    def to_dict(self):
        return {"type": "periodic", "dim": self.dim}


class ProductKernel:
    """Product of :class:`SE` and :class:`Periodic` leaves.

    Parameters
    ----------
    factors : sequence of SE or Periodic
        Leaves in traversal order. Every input column must be claimed by
        exactly one leaf, and the claimed columns must be ``0 .. d-1``.
    """

    def __init__(self, factors):
        self.factors = tuple(factors)
        if not self.factors:
            raise ConfigError("kernel needs at least one factor")
        claimed = [d for leaf in self.factors for d in leaf.dims]
        if len(set(claimed)) != len(claimed):
            raise ConfigError(f"input dimensions claimed more than once: {claimed}")
        if sorted(claimed) != list(range(len(claimed))):
            raise ConfigError(f"claimed dimensions {sorted(claimed)} must be 0..d-1")
        self.input_dim = len(claimed)

    def __eq__(self, other):
        return isinstance(other, ProductKernel) and self.factors == other.factors

    def __hash__(self):
        return hash(self.factors)

    def __repr__(self):
        return f"ProductKernel({list(self.factors)!r})"

    @property
    def slot_names(self):
        names = ["signal_std"]
        for leaf in self.factors:
            names.extend(leaf.slot_names)
        names.append("noise_std")
        return tuple(names)

    @property
    def n_slots(self):
        return len(self.slot_names)

    def to_dict(self):
        return {"version": 1, "factors": [leaf.to_dict() for leaf in self.factors]}

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("kernel document must be a JSON object")
        leaves = []

        def walk(node):
            kind = node.get("type", "product") if isinstance(node, dict) else None
            if kind == "product":
                for child in node.get("factors", []):
                    walk(child)
            elif kind == "se":
                leaves.append(SE(node["dims"]))
            elif kind == "periodic":
                leaves.append(Periodic(node["dim"]))
            else:
                raise ConfigError(f"unknown kernel node {node!r}")

        try:
            walk(doc)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed kernel document: {exc}") from exc
        return cls(leaves)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def check_factorizes(self, subspaces):
        """Raise unless every leaf lies inside a single subspace."""
        owner = {}
        for i, cols in enumerate(subspaces):
            for c in cols:
                owner[int(c)] = i
        if sorted(owner) != list(range(self.input_dim)):
            raise ConfigError(
                f"subspaces {subspaces} do not partition the {self.input_dim} kernel inputs"
            )
        for leaf in self.factors:
            groups = {owner[d] for d in leaf.dims}
            if len(groups) > 1:
                raise ConfigError(
                    f"kernel leaf {leaf!r} spans several subspaces; kernel does not factorize"
                )


_MAX_STD = float(np.sqrt(np.finfo(float).max))


@dataclass(frozen=True)
class Hyperparameters:
    """Positive kernel and noise hyperparameters.

    ``leaf_params[k]`` holds the length scales of an SE leaf, or
    ``(width, period)`` for a periodic leaf.
    """

    signal_std: float
    leaf_params: tuple
    noise_std: float

    def __post_init__(self):
        object.__setattr__(self, "leaf_params",
                           tuple(tuple(float(p) for p in lp) for lp in self.leaf_params))
        values = [self.signal_std, self.noise_std] + [p for lp in self.leaf_params for p in lp]
        if not all(np.isfinite(v) and v > 0 for v in values):
            raise ConfigError(f"hyperparameters must be finite and positive: {values}")
        if max(self.signal_std, self.noise_std) > _MAX_STD:
            raise ConfigError("signal or noise standard deviation overflows when squared")

    @property
    def signal_var(self):
        return self.signal_std ** 2

    @property
    def noise_var(self):
        return max(self.noise_std ** 2, NOISE_VAR_FLOOR)

    @classmethod
    def default(cls, kernel, signal_std=1.0, lengthscale=1.0, width=1.0, period=1.0,
                noise_std=0.1):
        params = []
        for leaf in kernel.factors:
            if isinstance(leaf, SE):
                params.append((lengthscale,) * len(leaf.dims))
            else:
                params.append((width, period))
        return cls(signal_std, tuple(params), noise_std)


def pack(hyp):
    """Flatten hyperparameters into a log-space vector (kernel traversal order)."""
    vals = [hyp.signal_std] + [p for lp in hyp.leaf_params for p in lp] + [hyp.noise_std]
    return np.log(np.asarray(vals, dtype=float))


def unpack(theta, kernel):
    """Inverse of :func:`pack`."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != kernel.n_slots:
        raise DimensionError(f"expected {kernel.n_slots} log-hyperparameters, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        raise ConfigError("log-hyperparameters must be finite")
    with np.errstate(over="ignore"):
        vals = np.exp(theta)
    pos = 1
    params = []
    for leaf in kernel.factors:
        k = len(leaf.slot_names)
        params.append(tuple(vals[pos:pos + k]))
        pos += k
    return Hyperparameters(float(vals[0]), tuple(params), float(vals[-1]))


def _check_points(X, n_cols, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != n_cols:
        raise DimensionError(f"{name} must have {n_cols} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name} contains non-finite coordinates")
    return X


def factor_cross(kernel, hyp, cols, X, X2=None, amplitude=False):
    """Kernel factor over a subset of input columns.

    Evaluates the product of every leaf's contribution restricted to ``cols``.
    ``X`` and ``X2`` hold local coordinates: column ``j`` of ``X`` is global
    input ``cols[j]``. SE leaves are split per dimension, so ``cols`` may cut
    through an SE leaf; a periodic leaf is included iff its column is present.

    Parameters
    ----------
    amplitude : bool
        Multiply by ``sigma_f^2``. Set on exactly one factor of a split kernel.
    """
    cols = [int(c) for c in cols]
    local = {c: j for j, c in enumerate(cols)}
    X = _check_points(X, len(cols), "X")
    X2 = X if X2 is None else _check_points(X2, len(cols), "X2")
    log_k = np.zeros((X.shape[0], X2.shape[0]))
    for leaf, params in zip(kernel.factors, hyp.leaf_params):
        if isinstance(leaf, SE):
            for d, ell in zip(leaf.dims, params):
                if d in local:
                    j = local[d]
                    diff = X[:, j, None] - X2[None, :, j]
                    log_k -= diff * diff / (2.0 * ell * ell)
        elif leaf.dim in local:
            width, period = params
            j = local[leaf.dim]
            s = np.sin(np.pi * np.abs(X[:, j, None] - X2[None, :, j]) / period)
            log_k -= s * s / (2.0 * width * width)
    k = np.exp(log_k)
    if amplitude:
        k *= hyp.signal_var
    return k


def factor_diag(kernel, hyp, cols, X, amplitude=False):
    """Diagonal of :func:`factor_cross` (``X`` against itself)."""
    X = _check_points(X, len(cols), "X")
    # every leaf is stationary with unit value at zero distance
    return np.full(X.shape[0], hyp.signal_var if amplitude else 1.0)


def eval_cross(kernel, hyp, X, X2):
    """Full kernel matrix ``k(X, X2)`` including ``sigma_f^2``."""
    return factor_cross(kernel, hyp, range(kernel.input_dim), X, X2, amplitude=True)


def eval_symmetric(kernel, hyp, X):
    """Symmetric kernel matrix ``k(X, X)``."""
    k = factor_cross(kernel, hyp, range(kernel.input_dim), X, None, amplitude=True)
    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, hyp.signal_var)
    return k


def eval_diag(kernel, hyp, X):
    return factor_diag(kernel, hyp, range(kernel.input_dim), X, amplitude=True)
