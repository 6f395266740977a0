"""Deterministic simulator of Byzantine-robust perturbed gradient descent
with robust gradient aggregation."""

from .errors import ConfigError, FilterCollapse
from .problems import ProblemMeta, make_problem
from .aggregators import (AggregatorSpec, coordinate_median, trimmed_mean,
                          iterative_filter, top_principal_direction)
from .adversaries import AdversaryStrategy, RoundContext
from .optimizer import (OptimizerConfig, ConvergenceGuarantee, EscapeOutcome,
                        derive_config, derive_exact_config, byzantine_pgd,
                        escape, descend_step, plain_inexact_gd)
from .harness import (ExperimentSpec, WorkerPool, shard_data, run_round,
                      measure_inexactness, run_experiment)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "FilterCollapse", "ProblemMeta", "make_problem",
    "AggregatorSpec", "coordinate_median", "trimmed_mean",
    "iterative_filter", "top_principal_direction", "AdversaryStrategy",
    "RoundContext", "OptimizerConfig", "ConvergenceGuarantee",
    "EscapeOutcome", "derive_config", "derive_exact_config",
    "byzantine_pgd", "escape", "descend_step", "plain_inexact_gd",
    "ExperimentSpec", "WorkerPool", "shard_data", "run_round",
    "measure_inexactness", "run_experiment",
]
