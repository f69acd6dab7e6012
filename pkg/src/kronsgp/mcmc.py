"""Metropolis-Hastings random walk in log-hyperparameter space.

The sampler is used as a gradient-free optimizer: the chain runs for
``epochs * samples_per_epoch`` steps and the best visited state is returned.
Randomness comes from a counter-based Philox generator seeded with a 64-bit
seed; chain ``c`` uses the ``SeedSequence(seed, spawn_key=(c,))`` stream, so
independent chains never share state.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .dense import DenseGpProblem, log_marginal
from .egp import egp_fit, egp_log_marginal
from .esgp import esgp_elbo, esgp_fit
from .exceptions import ConfigError, KronsgpError, NumericalError
from .kernels import unpack


class ObjectiveError(NumericalError):
    """The objective raised while the chain was running."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


def make_rng(seed, chain=0):
    """Philox generator for ``(seed, chain)``."""
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chain,))))


@dataclass
class MHConfig:
    """Sampler settings; ``step`` is a scalar or one value per log-slot."""

    epochs: int = 100
    samples_per_epoch: int = 1000
    step: object = 0.05
    seed: int = 0
    initial: object = None
    chain: int = 0

    def __post_init__(self):
        if int(self.epochs) < 1 or int(self.samples_per_epoch) < 1:
            raise ConfigError("epochs and samples_per_epoch must be >= 1")
        if np.any(np.asarray(self.step, dtype=float) <= 0):
            raise ConfigError("proposal steps must be positive")
        make_rng(self.seed, self.chain)

    @property
    def n_samples(self):
        return int(self.epochs) * int(self.samples_per_epoch)

    def to_dict(self):
        step = np.asarray(self.step, dtype=float)
        return {
            "epochs": int(self.epochs),
            "samples_per_epoch": int(self.samples_per_epoch),
            "step": step.tolist(),
            "seed": int(self.seed),
            "initial": None if self.initial is None else np.asarray(self.initial).tolist(),
            "chain": int(self.chain),
        }


@dataclass
class MHTrace:
    """Chain history.

    ``objectives[0]`` and ``states[0]`` are the initial point; entry ``k > 0``
    is the chain state after proposal ``k``. ``accepted[k-1]`` flags that
    proposal.
    """

    objectives: np.ndarray
    accepted: np.ndarray
    states: np.ndarray
    best_objective: float
    best_theta: np.ndarray
    best_index: int
    epoch_seconds: list = field(default_factory=list)

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted)) if self.accepted.size else 0.0

    @property
    def best_so_far(self):
        return np.maximum.accumulate(self.objectives)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "objective", "accepted"])
            w.writerow([0, repr(float(self.objectives[0])), 1])
            for k in range(1, self.objectives.size):
                w.writerow([k, repr(float(self.objectives[k])), int(self.accepted[k - 1])])

    def write_epoch_csv(self, path, samples_per_epoch):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "samples", "seconds", "seconds_per_sample", "best_objective"])
            best = self.best_so_far
            for e, sec in enumerate(self.epoch_seconds):
                end = min((e + 1) * samples_per_epoch, best.size - 1)
                w.writerow([e, samples_per_epoch, repr(sec), repr(sec / samples_per_epoch),
                            repr(float(best[end]))])


def mh_run(objective, config, initial=None, callback=None):
    """Run a random-walk Metropolis-Hastings chain maximizing ``objective``.

    Parameters
    ----------
    objective : callable
        Maps a log-hyperparameter vector to a scalar (log target density
        under a flat prior). Non-finite values reject the proposal.
    config : MHConfig
    initial : array_like, optional
        Starting point; overrides ``config.initial``.
    callback : callable, optional
        Called as ``callback(epoch, seconds, best_objective)`` after each epoch.

    Returns
    -------
    MHTrace
    """
    theta = np.asarray(config.initial if initial is None else initial, dtype=float).ravel()
    if theta.size == 0:
        raise ConfigError("an initial log-hyperparameter vector is required")
    step = np.broadcast_to(np.asarray(config.step, dtype=float), theta.shape).copy()
    rng = make_rng(config.seed, config.chain)

    current = float(objective(theta))
    if not np.isfinite(current):
        raise NumericalError(f"objective is not finite at the initial point ({current})")

    n = config.n_samples
    objectives = np.empty(n + 1)
    states = np.empty((n + 1, theta.size))
    accepted = np.zeros(n, dtype=bool)
    objectives[0], states[0] = current, theta
    best, best_theta, best_index = current, theta.copy(), 0
    epoch_seconds = []

    k = 0
    for epoch in range(int(config.epochs)):
        t0 = time.perf_counter()
        for _ in range(int(config.samples_per_epoch)):
            k += 1
            proposal = theta + step * rng.standard_normal(theta.size)
            log_u = np.log(rng.random())
            try:
                value = float(objective(proposal))
            except KronsgpError as exc:
                raise ObjectiveError(f"objective failed at sample {k}: {exc}", k) from exc
            except Exception as exc:
                raise ObjectiveError(f"objective failed at sample {k}: {exc!r}", k) from exc
            if np.isfinite(value) and log_u < value - current:
                theta, current = proposal, value
                accepted[k - 1] = True
                if current > best:
                    best, best_theta, best_index = current, theta.copy(), k
            objectives[k], states[k] = current, theta
        epoch_seconds.append(time.perf_counter() - t0)
        if callback is not None:
            callback(epoch, epoch_seconds[-1], best)

    return MHTrace(objectives, accepted, states, best, best_theta, best_index, epoch_seconds)


def make_objective(kind, inputs, y, kernel, inducing=None):
    """Log-space objective for ``kind`` in ``{"egp", "esgp", "dense"}``.

    Hyperparameters that overflow or make a factorization fail score ``-inf``,
    so the sampler simply rejects them.
    """
    if kind == "esgp" and inducing is None:
        raise ConfigError("esgp training needs an inducing grid")
    if kind == "dense":
        X = inputs.expand() if hasattr(inputs, "expand") else np.asarray(inputs, dtype=float)

    def objective(theta):
        with np.errstate(all="ignore"):
            try:
                hyp = unpack(theta, kernel)
            except ConfigError:
                # overflowing log-values are outside the support
                return -np.inf
            try:
                if kind == "egp":
                    return egp_log_marginal(inputs, y, kernel, hyp)
                if kind == "esgp":
                    return esgp_elbo(inputs, y, inducing, kernel, hyp)
                if kind == "dense":
                    return log_marginal(DenseGpProblem(X, y, kernel, hyp))
            except np.linalg.LinAlgError:
                return -np.inf
        raise ConfigError(f"unknown model kind {kind!r}")

    return objective


@dataclass
class TrainedModel:
    kind: str
    kernel: object
    hyp: object
    theta: np.ndarray
    objective: float
    fit: object
    inducing: object = None

    def predict(self, X_star):
        return self.fit.predict(X_star)


def finalize(kind, inputs, y, kernel, theta, inducing=None):
    """Build the cached model at fixed log-hyperparameters."""
    hyp = unpack(theta, kernel)
    if kind == "egp":
        fit = egp_fit(inputs, y, kernel, hyp)
        value = fit.log_marginal
    elif kind == "esgp":
        fit = esgp_fit(inputs, y, inducing, kernel, hyp)
        value = fit.elbo
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    return TrainedModel(kind, kernel, hyp, np.asarray(theta, dtype=float), float(value), fit,
                        inducing)


def train(inputs, y, kind, kernel, config, inducing=None, callback=None):
    """Train hyperparameters with :func:`mh_run` and finalize at the best sample.

    Returns
    -------
    (TrainedModel, MHTrace)
    """
    if config.initial is None:
        raise ConfigError("MHConfig.initial must be set")
    if np.asarray(config.initial).size != kernel.n_slots:
        raise ConfigError(f"initial vector needs {kernel.n_slots} entries {kernel.slot_names}")
    objective = make_objective(kind, inputs, y, kernel, inducing)
    trace = mh_run(objective, config, callback=callback)
    model = finalize(kind, inputs, y, kernel, trace.best_theta, inducing)
    return model, trace


__all__ = [
    "MHConfig",
    "MHTrace",
    "ObjectiveError",
    "TrainedModel",
    "finalize",
    "make_objective",
    "make_rng",
    "mh_run",
    "train",
]
