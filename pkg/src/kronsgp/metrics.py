"""Prediction quality metrics.

``msll`` is the mean negative log predictive density
``mean(0.5 log(2 pi var) + (y - mean)^2 / (2 var))``. Unlike the usual
standardised log loss, no trivial-model baseline is subtracted.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigError, DimensionError


def _vectors(*arrays):
    out = [np.asarray(a, dtype=float).ravel() for a in arrays]
    n = out[0].size
    if n < 1:
        raise DimensionError("need at least one evaluation point")
    if any(a.size != n for a in out):
        raise DimensionError(f"length mismatch: {[a.size for a in out]}")
    if not all(np.all(np.isfinite(a)) for a in out):
        raise ConfigError("metric inputs must be finite")
    return out


def rmse(truth, mean):
    truth, mean = _vectors(truth, mean)
    return float(np.sqrt(np.mean((truth - mean) ** 2)))


def msll(truth, mean, variance):
    truth, mean, variance = _vectors(truth, mean, variance)
    if np.any(variance <= 0):
        raise ConfigError("predictive variances must be positive")
    err2 = (truth - mean) ** 2
    return float(np.mean(0.5 * np.log(2.0 * np.pi * variance) + err2 / (2.0 * variance)))


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    msll: float
    n_t: int

    def to_json(self):
        return json.dumps({"version": 1, **asdict(self)}, indent=2, sort_keys=True)


def evaluate(truth, mean, variance):
    return MetricsReport(rmse(truth, mean), msll(truth, mean, variance), int(np.size(truth)))
