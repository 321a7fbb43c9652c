"""Input validation helpers shared by the estimators and the harness."""

from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid configuration values.

    ``fields`` lists the offending field names so the CLI can report all of
    them at once.
    """

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = tuple(fields)


class MeasurementError(RuntimeError):
    """A simulated acquisition produced no usable signal."""


def check_probability(value, name):
    if not isinstance(value, Real) or not 0.0 <= float(value) <= 1.0:
        raise ConfigurationError(f"{name} must be a probability in [0, 1], got {value!r}", [name])
    return float(value)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, Integral) or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}", [name])
    return int(value)


def check_finite(value, name):
    if not math.isfinite(float(value)):
        raise ConfigurationError(f"{name} must be finite, got {value!r}", [name])
    return float(value)


def check_rng(random_state):
    """Return a ``numpy.random.Generator`` for an int seed, a generator, or None."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (Integral, np.random.SeedSequence)):
        return np.random.default_rng(random_state)
    raise ConfigurationError(f"cannot build a random generator from {random_state!r}", ["random_state"])


def check_genes(genes, n_genes=None, name="genes"):
    arr = np.asarray(genes, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n_genes is not None and arr.shape[0] != n_genes:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n_genes}")
    return arr
