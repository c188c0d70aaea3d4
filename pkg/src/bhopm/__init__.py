"""Hierarchical ordered-probit estimation of candidate potential and interviewer toughness."""

__version__ = "0.1.0"

from .data import (CsvSchema, Dataset, GradeScale, Observation, chronological_split,  # noqa: E402
                   load_csv, summarize, write_csv)
from .model import (BHOPM, ConstrainedParams, ModelConfig, ParameterSpace,  # noqa: E402
                    cell_probabilities, inverse_transform, log_cell_probabilities,
                    log_likelihood_per_obs, log_posterior, transform)
from .sampler import Posterior, SamplerConfig, fit, run_chains  # noqa: E402
from .synthetic import SyntheticConfig, SyntheticTruth, generate_synthetic  # noqa: E402
