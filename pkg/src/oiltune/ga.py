"""Real-valued genetic algorithm with elitism and elite-biased mutation.

The algorithm is generic over the fitness oracle. An oracle is any callable
``oracle(genes, rng)`` returning a nonnegative number, or an object that
converts to one with ``float()``; such objects are kept on the individual
as its ``report``. ``rng`` is a generator derived from the run seed, the
generation and the individual's index, so evaluations are pure and may be
reordered or parallelised without changing results.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from numbers import Real
from typing import Any, Callable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ConfigurationError, check_genes, check_positive_int, check_probability, check_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneSpec:
    name: str
    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)) or not self.low < self.high:
            raise ConfigurationError(
                f"gene {self.name!r} needs finite low < high, got [{self.low}, {self.high}]", [self.name]
            )

    @property
    def width(self):
        return self.high - self.low

    def to_dict(self):
        return {"name": self.name, "low": float(self.low), "high": float(self.high)}

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["name"]), float(d["low"]), float(d["high"]))


def _as_specs(specs):
    specs = [s if isinstance(s, GeneSpec) else GeneSpec(f"x{i}", *map(float, s)) for i, s in enumerate(specs)]
    if not specs:
        raise ConfigurationError("at least one gene spec is required", ["gene_specs"])
    return specs


def _bounds(specs):
    return np.array([s.low for s in specs]), np.array([s.high for s in specs])


@dataclass(frozen=True)
class Individual:
    genes: tuple
    fitness: Optional[float] = None
    report: Any = None

    @property
    def evaluated(self):
        return self.fitness is not None


@dataclass(frozen=True)
class GaConfig:
    """GA settings.

    ``population_schedule`` is a sequence of ``(generation, size)`` pairs;
    the size applies from that generation on. The first entry must start at
    generation 0.
    """

    crossover_rate: float = 0.5
    mutation_rate: float = 0.3
    elite_bias_rate: float = 0.3
    elite_sigma: float = 0.05  # fraction of the gene range
    population_schedule: tuple = ((0, 35), (3, 25))
    generations: int = 10
    rng_seed: int = 0
    reevaluate_elite: bool = False

    def __post_init__(self):
        bad = []
        for name in ("crossover_rate", "mutation_rate", "elite_bias_rate"):
            try:
                check_probability(getattr(self, name), name)
            except ConfigurationError:
                bad.append(name)
        if not (isinstance(self.elite_sigma, Real) and self.elite_sigma > 0):
            bad.append("elite_sigma")
        try:
            schedule = tuple((int(g), int(n)) for g, n in self.population_schedule)
            if not schedule or schedule[0][0] != 0 or any(n < 2 for _, n in schedule):
                raise ValueError
            if any(b[0] <= a[0] for a, b in zip(schedule, schedule[1:])):
                raise ValueError
            object.__setattr__(self, "population_schedule", schedule)
        except (TypeError, ValueError):
            bad.append("population_schedule")
        try:
            check_positive_int(self.generations, "generations")
        except ConfigurationError:
            bad.append("generations")
        if isinstance(self.rng_seed, bool) or not isinstance(self.rng_seed, (int, np.integer)) or self.rng_seed < 0:
            bad.append("rng_seed")
        if bad:
            raise ConfigurationError(f"invalid GA settings: {bad}", bad)

    def population_size(self, generation):
        size = self.population_schedule[0][1]
        for start, n in self.population_schedule:
            if generation >= start:
                size = n
        return size

    def to_dict(self):
        return {
            "crossover_rate": self.crossover_rate,
            "mutation_rate": self.mutation_rate,
            "elite_bias_rate": self.elite_bias_rate,
            "elite_sigma": self.elite_sigma,
            "population_schedule": [list(p) for p in self.population_schedule],
            "generations": self.generations,
            "rng_seed": int(self.rng_seed),
            "reevaluate_elite": self.reevaluate_elite,
        }

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown GA settings {sorted(unknown)}", sorted(unknown))
        d = dict(d)
        if "population_schedule" in d:
            d["population_schedule"] = tuple(tuple(p) for p in d["population_schedule"])
        return cls(**d)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best: Individual
    population: tuple
    evaluations: int


@dataclass
class Diagnostics:
    uniform_fallbacks: int = 0
    invalid_fitness: int = 0


def initialize_population(specs, size, random_state=None):
    """``size`` unevaluated individuals with genes uniform on their ranges."""
    specs = _as_specs(specs)
    if isinstance(size, bool) or int(size) < 2:
        raise ConfigurationError(f"population size must be >= 2, got {size!r}", ["size"])
    rng = check_rng(random_state)
    low, high = _bounds(specs)
    genes = rng.uniform(low, high, size=(int(size), len(specs)))
    return [Individual(tuple(row.tolist())) for row in genes]


def select_parent(population, random_state=None, diagnostics=None):
    """Roulette-wheel draw; uniform when every fitness is zero."""
    rng = check_rng(random_state)
    fitness = np.array([ind.fitness for ind in population], dtype=float)
    if np.any(np.isnan(fitness)):
        raise ValueError("all individuals must be evaluated before selection")
    total = fitness.sum()
    if total <= 0:
        if diagnostics is not None:
            diagnostics.uniform_fallbacks += 1
        return population[int(rng.integers(len(population)))]
    idx = np.searchsorted(np.cumsum(fitness), rng.random() * total, side="right")
    return population[min(int(idx), len(population) - 1)]


def crossover(parent_a, parent_b, crossover_rate=0.5, random_state=None):
    """Uniform crossover: each gene comes from ``parent_b`` with probability ``crossover_rate``."""
    a = check_genes(parent_a)
    b = check_genes(parent_b, n_genes=a.shape[0])
    rng = check_rng(random_state)
    take_b = rng.random(a.shape[0]) < crossover_rate
    return np.where(take_b, b, a)


def mutate(child, elite, specs, config=None, random_state=None):
    """Mutate genes independently.

    A mutated gene is redrawn near the elite's gene (Gaussian with standard
    deviation ``elite_sigma`` times the range) with probability
    ``elite_bias_rate``, and uniformly on its range otherwise. Results are
    clamped to the range.
    """
    config = config or GaConfig()
    specs = _as_specs(specs)
    x = check_genes(child, n_genes=len(specs)).copy()
    e = check_genes(elite, n_genes=len(specs), name="elite")
    rng = check_rng(random_state)
    low, high = _bounds(specs)
    n = x.shape[0]
    mutated = rng.random(n) < config.mutation_rate
    near_elite = rng.random(n) < config.elite_bias_rate
    gaussian = rng.normal(e, config.elite_sigma * (high - low))
    uniform = rng.uniform(low, high)
    x = np.where(mutated, np.where(near_elite, gaussian, uniform), x)
    return np.clip(x, low, high)


def _evaluate(oracle, genes, rng, diagnostics):
    value = oracle(np.asarray(genes, dtype=float), rng)
    try:
        fitness = float(value)
    except (TypeError, ValueError):
        fitness = float("nan")
    report = None if isinstance(value, Real) else value
    if not math.isfinite(fitness) or fitness < 0:
        diagnostics.invalid_fitness += 1
        logger.warning("fitness %r replaced by 0 for genes %s", value, genes)
        fitness = 0.0
    return fitness, report


def _best(population):
    return max(population, key=lambda ind: ind.fitness)


def evolve(oracle, specs, config=None, random_state=None, diagnostics=None, callback=None):
    """Run the GA and return one ``GenerationRecord`` per generation.

    Generation 0 is the random initial population. Each later generation is
    the previous elite (kept with its stored fitness) plus children from
    select, crossover and mutate, up to the scheduled size.
    """
    config = config or GaConfig()
    specs = _as_specs(specs)
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    rng = check_rng(config.rng_seed if random_state is None else random_state)
    eval_seed = int(rng.integers(2**63))

    def evaluate_all(population, generation):
        out = []
        count = 0
        for i, ind in enumerate(population):
            if ind.evaluated:
                out.append(ind)
                continue
            ind_rng = np.random.default_rng([eval_seed, generation, i])
            fitness, report = _evaluate(oracle, ind.genes, ind_rng, diagnostics)
            out.append(replace(ind, fitness=fitness, report=report))
            count += 1
        return out, count

    population = initialize_population(specs, config.population_size(0), rng)
    population, evaluations = evaluate_all(population, 0)
    records = [GenerationRecord(0, _best(population), tuple(population), evaluations)]
    if callback:
        callback(records[-1])

    for generation in range(1, config.generations):
        elite = records[-1].best
        if config.reevaluate_elite:
            elite = Individual(elite.genes)
        size = config.population_size(generation)
        children = [elite]
        while len(children) < size:
            pa = select_parent(population, rng, diagnostics)
            pb = select_parent(population, rng, diagnostics)
            child = crossover(pa.genes, pb.genes, config.crossover_rate, rng)
            child = mutate(child, elite.genes, specs, config, rng)
            children.append(Individual(tuple(child.tolist())))
        population, count = evaluate_all(children, generation)
        evaluations += count
        records.append(GenerationRecord(generation, _best(population), tuple(population), evaluations))
        if callback:
            callback(records[-1])
    return records


class GeneticOptimizer(BaseEstimator):
    """Scikit-learn style wrapper around :func:`evolve`.

    ``fit(oracle)`` runs the search; results are exposed as fitted
    attributes (``best_genes_``, ``best_fitness_``, ``best_report_``,
    ``history_``, ``n_evaluations_``, ``diagnostics_``).

    Parameters
    ----------
    gene_specs : sequence of GeneSpec or (low, high) pairs
    population_schedule : sequence of (generation, size)
    random_state : int
        Seed of the run; identical seeds give identical histories for a
        deterministic oracle.
    """

    def __init__(
        self,
        gene_specs=None,
        crossover_rate=0.5,
        mutation_rate=0.3,
        elite_bias_rate=0.3,
        elite_sigma=0.05,
        population_schedule=((0, 35), (3, 25)),
        generations=10,
        reevaluate_elite=False,
        random_state=0,
    ):
        self.gene_specs = gene_specs
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.elite_bias_rate = elite_bias_rate
        self.elite_sigma = elite_sigma
        self.population_schedule = population_schedule
        self.generations = generations
        self.reevaluate_elite = reevaluate_elite
        self.random_state = random_state

    def _ga_config(self):
        return GaConfig(
            crossover_rate=self.crossover_rate,
            mutation_rate=self.mutation_rate,
            elite_bias_rate=self.elite_bias_rate,
            elite_sigma=self.elite_sigma,
            population_schedule=tuple(tuple(p) for p in self.population_schedule),
            generations=self.generations,
            rng_seed=int(self.random_state),
            reevaluate_elite=self.reevaluate_elite,
        )

    def fit(self, oracle, callback=None):
        if not callable(oracle):
            raise TypeError("oracle must be callable as oracle(genes, rng)")
        if self.gene_specs is None:
            raise ConfigurationError("gene_specs must be set before fit", ["gene_specs"])
        specs = _as_specs(self.gene_specs)
        self.diagnostics_ = Diagnostics()
        self.history_ = evolve(oracle, specs, self._ga_config(), diagnostics=self.diagnostics_, callback=callback)
        best = max((r.best for r in self.history_), key=lambda ind: ind.fitness)
        self.gene_specs_ = tuple(specs)
        self.best_genes_ = np.asarray(best.genes)
        self.best_fitness_ = best.fitness
        self.best_report_ = best.report
        self.n_evaluations_ = self.history_[-1].evaluations
        return self

    @property
    def best_fitness_curve_(self):
        check_is_fitted(self, "history_")
        return np.array([r.best.fitness for r in self.history_])
