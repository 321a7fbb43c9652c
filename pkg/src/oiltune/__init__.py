"""Genetic-algorithm self-tuning of a simulated injection-locked QKD transmitter."""

from ._validation import ConfigurationError, MeasurementError
from .detection import ChannelConfig, DetectionCounts, acquire_counts, measure_visibility, qber_expected
from .fitness import FitnessReport, coherence_fitness, qber_fitness
from .ga import GaConfig, GeneSpec, GeneticOptimizer, evolve
from .keyrate import DecoyInputs, KeyRateResult, binary_entropy, key_rate
from .plant import ControlParams, PlantConfig
from .tuner import TransmitterTuner

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ConfigurationError",
    "ControlParams",
    "DecoyInputs",
    "DetectionCounts",
    "FitnessReport",
    "GaConfig",
    "GeneSpec",
    "GeneticOptimizer",
    "KeyRateResult",
    "MeasurementError",
    "PlantConfig",
    "TransmitterTuner",
    "acquire_counts",
    "binary_entropy",
    "coherence_fitness",
    "evolve",
    "key_rate",
    "measure_visibility",
    "qber_expected",
    "qber_fitness",
]
