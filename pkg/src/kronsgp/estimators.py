"""scikit-learn style regressors wrapping the dense, E-GP and E-SGP models.

All three share one parameter set. ``n_epochs=0`` skips sampling and uses the
initial hyperparameters as they are; otherwise the Metropolis-Hastings trainer
runs for ``n_epochs * samples_per_epoch`` proposals and the best sample wins.
Predictions are of the latent function: ``return_std``/``return_var`` exclude
the observation noise.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dense import DenseGpProblem, log_marginal, predict_dense_var
from .egp import VAR_FLOOR
from .esgp import InducingGrid
from .exceptions import ConfigError, DimensionError
from .inputs import ProductInputs, decompose
from .kernels import SE, Hyperparameters, Periodic, ProductKernel, pack, unpack
from .mcmc import MHConfig, finalize, make_objective, mh_run


def default_kernel(columns):
    """One SE leaf per subspace."""
    return ProductKernel([SE(tuple(cols)) for cols in columns])


def initial_hyperparameters(kernel, X, y):
    """Data-scaled starting point.

    ``sigma_f = std(y)``, SE length scales a quarter of each column's range,
    periodic leaves start at unit width with the period at half the range,
    noise at a tenth of ``std(y)``.
    """
    X = np.asarray(X, dtype=float)
    sd = float(np.std(y))
    sd = sd if sd > 0 else 1.0
    span = np.ptp(X, axis=0)
    span = np.where(span > 0, span, 1.0)
    params = []
    for leaf in kernel.factors:
        if isinstance(leaf, Periodic):
            params.append((1.0, 0.5 * span[leaf.dim]))
        else:
            params.append(tuple(0.25 * span[d] for d in leaf.dims))
    return Hyperparameters(sd, tuple(params), 0.1 * sd)


def _as_kernel(kernel, columns):
    if kernel is None:
        return default_kernel(columns)
    if isinstance(kernel, ProductKernel):
        return kernel
    if isinstance(kernel, dict):
        return ProductKernel.from_dict(kernel)
    if isinstance(kernel, str):
        return ProductKernel.from_json(kernel)
    raise ConfigError(f"cannot interpret kernel {kernel!r}")


def _as_theta(hyperparameters, kernel, X, y):
    if hyperparameters is None:
        return pack(initial_hyperparameters(kernel, X, y))
    if isinstance(hyperparameters, Hyperparameters):
        return pack(hyperparameters)
    theta = np.asarray(hyperparameters, dtype=float).ravel()
    unpack(theta, kernel)
    return theta


class _BaseGP(RegressorMixin, BaseEstimator):
    _kind = None

    def _product_data(self, X, y):
        if isinstance(X, ProductInputs):
            y = np.asarray(y, dtype=float).ravel()
            if y.size != X.N:
                raise DimensionError(f"expected {X.N} observations, got {y.size}")
            return X, y
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise DimensionError(f"{X.shape[0]} input rows but {y.shape[0]} targets")
        columns = self.subspaces if self.subspaces is not None else [range(X.shape[1])]
        inputs, y_ordered, _ = decompose(X, y, [tuple(c) for c in columns])
        return inputs, y_ordered

    def _sample(self, objective, theta):
        if self.n_epochs <= 0:
            return theta, float(objective(theta)), None
        config = MHConfig(self.n_epochs, self.samples_per_epoch, self.step_size,
                          self.random_state, initial=theta)
        trace = mh_run(objective, config)
        return trace.best_theta, trace.best_objective, trace

    def _query(self, X):
        if isinstance(X, ProductInputs):
            return X
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def predict(self, X, return_std=False, return_var=False):
        """Posterior mean, optionally with latent standard deviation or variance."""
        if return_std and return_var:
            raise ConfigError("ask for return_std or return_var, not both")
        check_is_fitted(self, "theta_")
        mean, var = self._predict(self._query(X))
        if return_std:
            return mean, np.sqrt(var)
        if return_var:
            return mean, var
        return mean


class _ProductGP(_BaseGP):
    def fit(self, X, y):
        inputs, y = self._product_data(X, y)
        kernel = _as_kernel(self.kernel, inputs.columns)
        kernel.check_factorizes(inputs.columns)
        inducing = self._inducing(inputs)
        theta = _as_theta(self.hyperparameters, kernel, inputs.expand(), y)
        objective = make_objective(self._kind, inputs, y, kernel, inducing)
        theta, _, self.trace_ = self._sample(objective, theta)
        self.model_ = finalize(self._kind, inputs, y, kernel, theta, inducing)
        self.kernel_, self.inputs_, self.theta_ = kernel, inputs, self.model_.theta
        self.hyperparameters_ = self.model_.hyp
        self.objective_ = self.model_.objective
        self.n_features_in_ = inputs.dim
        return self

    def _inducing(self, inputs):
        return None

    def _predict(self, X):
        return self.model_.predict(X)


class EGPRegressor(_ProductGP):
    """Exact GP on Cartesian-product inputs.

    Parameters
    ----------
    kernel : ProductKernel, dict or JSON str, optional
        Defaults to one SE leaf per subspace.
    subspaces : list of list of int, optional
        Column groups used to recover the product structure of an array ``X``.
        Ignored when ``X`` is a :class:`ProductInputs`. Defaults to a single
        subspace (no factorization).
    hyperparameters : Hyperparameters or array_like, optional
        Starting point, either as values or as a log-vector.
    n_epochs, samples_per_epoch, step_size, random_state
        Metropolis-Hastings settings.

    Attributes
    ----------
    objective_ : float
        Log marginal likelihood at the chosen hyperparameters.
    trace_ : MHTrace or None
    """

    _kind = "egp"

    def __init__(self, kernel=None, subspaces=None, hyperparameters=None, n_epochs=0,
                 samples_per_epoch=1000, step_size=0.05, random_state=0):
        self.kernel = kernel
        self.subspaces = subspaces
        self.hyperparameters = hyperparameters
        self.n_epochs = n_epochs
        self.samples_per_epoch = samples_per_epoch
        self.step_size = step_size
        self.random_state = random_state


class ESGPRegressor(_ProductGP):
    """Sparse variational GP with Kronecker-factored inducing grids.

    Takes the parameters of :class:`EGPRegressor` plus ``inducing``, an
    :class:`InducingGrid` (or its dict form) with one entry per subspace.
    Without it the training points themselves are used, which reproduces the
    exact model.
    """

    _kind = "esgp"

    def __init__(self, kernel=None, subspaces=None, hyperparameters=None, inducing=None,
                 n_epochs=0, samples_per_epoch=1000, step_size=0.05, random_state=0):
        self.kernel = kernel
        self.subspaces = subspaces
        self.hyperparameters = hyperparameters
        self.inducing = inducing
        self.n_epochs = n_epochs
        self.samples_per_epoch = samples_per_epoch
        self.step_size = step_size
        self.random_state = random_state

    def _inducing(self, inputs):
        if self.inducing is None:
            grid = InducingGrid.from_inputs(inputs)
        elif isinstance(self.inducing, dict):
            grid = InducingGrid.from_dict(self.inducing)
        else:
            grid = self.inducing
        if len(grid.subspaces) != inputs.n_subspaces:
            raise ConfigError(
                f"{len(grid.subspaces)} inducing subspaces for {inputs.n_subspaces} input subspaces")
        return grid

    @property
    def elbo_(self):
        check_is_fitted(self, "theta_")
        return self.objective_


class ExactGPRegressor(_BaseGP):
    """Dense exact GP on arbitrary inputs (cubic cost; capped in size).

    Parameters match :class:`EGPRegressor` minus ``subspaces``.
    """

    _kind = "dense"

    def __init__(self, kernel=None, hyperparameters=None, n_epochs=0, samples_per_epoch=1000,
                 step_size=0.05, random_state=0):
        self.kernel = kernel
        self.hyperparameters = hyperparameters
        self.n_epochs = n_epochs
        self.samples_per_epoch = samples_per_epoch
        self.step_size = step_size
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise DimensionError(f"{X.shape[0]} input rows but {y.shape[0]} targets")
        kernel = _as_kernel(self.kernel, [range(X.shape[1])])
        theta = _as_theta(self.hyperparameters, kernel, X, y)
        objective = make_objective("dense", X, y, kernel)
        theta, _, self.trace_ = self._sample(objective, theta)
        self.kernel_, self.theta_ = kernel, np.asarray(theta, dtype=float)
        self.hyperparameters_ = unpack(theta, kernel)
        self.problem_ = DenseGpProblem(X, y, kernel, self.hyperparameters_)
        self.objective_ = log_marginal(self.problem_)
        self.n_features_in_ = X.shape[1]
        return self

    def _predict(self, X):
        if isinstance(X, ProductInputs):
            X = X.expand()
        mean, var = predict_dense_var(self.problem_, X)
        return mean, np.maximum(var, VAR_FLOOR)


__all__ = [
    "EGPRegressor",
    "ESGPRegressor",
    "ExactGPRegressor",
    "default_kernel",
    "initial_hyperparameters",
]
