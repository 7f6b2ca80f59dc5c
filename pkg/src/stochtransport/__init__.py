"""Numerical laboratory for stochastic transport with irregular drift.

Mollified transport solutions are built along stochastic characteristics,
their exponential-weighted means are compared with a parabolic solver, and
energy, commutator and selection properties are checked numerically.
"""

from .config import ExperimentConfig, load_config, resolve, validate_config
from .errors import (
                     ConfigError,
                     GridMismatch,
                     InsufficientSamples,
                     InvalidField,
                     InvalidMollifier,
                     InvalidTestFunction,
                     NonInvertibleFlow,
                     StochTransportError,
                     UnresolvedMollifier,
                     UnstableConfig,
)
from .experiments import RUNNERS, Verdict, run_experiment
from .field import (
                     MollifierFamily,
                     ScalarField,
                     VectorField,
                     drift_from_id,
                     initial_from_id,
                     mollify_field,
                     mollify_initial,
                     validate_hypothesis,
)
from .grid import SpaceTimeGrid
from .noise import BrownianPath, ControlFunction, sample_path

__version__ = "0.1.0"

__all__ = [
                     "RUNNERS",
                     "BrownianPath",
                     "ConfigError",
                     "ControlFunction",
                     "ExperimentConfig",
                     "GridMismatch",
                     "InsufficientSamples",
                     "InvalidField",
                     "InvalidMollifier",
                     "InvalidTestFunction",
                     "MollifierFamily",
                     "NonInvertibleFlow",
                     "ScalarField",
                     "SpaceTimeGrid",
                     "StochTransportError",
                     "UnresolvedMollifier",
                     "UnstableConfig",
                     "VectorField",
                     "Verdict",
                     "drift_from_id",
                     "initial_from_id",
                     "load_config",
                     "mollify_field",
                     "mollify_initial",
                     "resolve",
                     "run_experiment",
                     "sample_path",
                     "validate_config",
                     "validate_hypothesis",
]
