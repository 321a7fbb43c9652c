"""Estimator-style front end: tune the simulated transmitter with the GA."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import detection, fitness, ga, harness, plant
from ._validation import ConfigurationError, check_genes


class TransmitterTuner(BaseEstimator):
    """Search the transmitter controls that maximise one of the two fitnesses.

    ``fit()`` runs one GA on the surrogate plant; ``predict(X)`` evaluates the
    noiseless fitness at each row of control settings (columns in the order
    of ``controls_``); ``score()`` is the best fitness found.

    Parameters
    ----------
    objective : {"coherence", "qber"}
    controls : sequence of str or None
        Controls to search; the others stay at ``base_params``. Defaults to
        the first five for "coherence" and all six for "qber".
    population_schedule, generations : GA schedule; None picks the campaign default.
    plant_config, channel_config : PlantConfig, ChannelConfig or None
    noiseless : bool
        Use expected counts instead of sampled ones during the search.
    random_state : int
    """

    def __init__(self, objective="qber", controls=None, population_schedule=None, generations=10,
                 plant_config=None, channel_config=None, base_params=None, noiseless=False,
                 alpha=fitness.DEFAULT_ALPHA, random_state=0):
        self.objective = objective
        self.controls = controls
        self.population_schedule = population_schedule
        self.generations = generations
        self.plant_config = plant_config
        self.channel_config = channel_config
        self.base_params = base_params
        self.noiseless = noiseless
        self.alpha = alpha
        self.random_state = random_state

    def _experiment(self):
        if self.objective not in ("coherence", "qber"):
            raise ConfigurationError(f"objective must be 'coherence' or 'qber', got {self.objective!r}",
                                     ["objective"])
        return "tune-qber" if self.objective == "qber" else "tune-coherence"

    def fit(self, X=None, y=None):
        """Run the search. ``X`` and ``y`` are ignored (the plant is the data)."""
        experiment = self._experiment()
        if self.controls is None:
            names = harness.QBER_GENES if experiment == "tune-qber" else harness.COHERENCE_GENES
        else:
            names = tuple(self.controls)
        unknown = set(names) - set(plant.CONTROL_NAMES)
        if unknown or not names:
            raise ConfigurationError(f"unknown controls {sorted(unknown)}", ["controls"])
        schedule = self.population_schedule
        if schedule is None:
            schedule = harness._default_ga(experiment).population_schedule
        self.plant_config_ = self.plant_config or plant.PlantConfig()
        self.channel_config_ = self.channel_config or detection.ChannelConfig()
        self.controls_ = tuple(names)
        self.oracle_ = harness.PlantOracle(self.objective, names, self.plant_config_, self.channel_config_,
                                           self.base_params, self.noiseless, self.alpha)
        self.optimizer_ = ga.GeneticOptimizer(
            gene_specs=[ga.GeneSpec(n, *plant.DEFAULT_RANGES[n]) for n in names],
            population_schedule=schedule,
            generations=self.generations,
            random_state=self.random_state,
        ).fit(self.oracle_)
        self.best_params_ = self.oracle_.params(self.optimizer_.best_genes_)
        self.best_report_ = self.optimizer_.best_report_
        self.best_fitness_ = self.optimizer_.best_fitness_
        return self

    def predict(self, X):
        """Noiseless fitness for each row of control settings."""
        check_is_fitted(self, "optimizer_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.ndim != 2:
            raise ValueError(f"X must be two-dimensional, got shape {X.shape}")
        noiseless = harness.PlantOracle(self.objective, self.controls_, self.plant_config_, self.channel_config_,
                                        self.base_params, True, self.alpha)
        out = []
        for row in X:
            check_genes(row, n_genes=len(self.controls_), name="row of X")
            out.append(float(noiseless(row, None)))
        return np.array(out)

    def score(self, X=None, y=None):
        check_is_fitted(self, "optimizer_")
        return float(self.best_fitness_)
