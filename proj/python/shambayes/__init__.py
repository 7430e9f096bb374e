"""Hierarchical Bayesian analysis of sham-controlled experiments.

The heavy lifting lives in the C++ core; this package re-exports it.
"""

from ._core import (
    DEFAULT_SEED,
    CountRecord,
    Dataset,
    Estimate,
    FitResult,
    Model,
    ModelError,
    StudyRecord,
    ValidationError,
    difference,
    exposed_only,
    fit,
    linear_adjust,
    log_odds_transform,
    rescale_sham_ses,
    run_cli,
    sham_chi_square,
    significance,
    simulate,
)

__all__ = [
    "DEFAULT_SEED",
    "CountRecord",
    "Dataset",
    "Estimate",
    "FitResult",
    "Model",
    "ModelError",
    "StudyRecord",
    "ValidationError",
    "difference",
    "exposed_only",
    "fit",
    "linear_adjust",
    "log_odds_transform",
    "rescale_sham_ses",
    "run_cli",
    "sham_chi_square",
    "significance",
    "simulate",
]
