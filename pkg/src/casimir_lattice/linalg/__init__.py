"""Sparse SPD factorization, log-determinants and Schur complements."""

from .cholesky import Analysis, analyze, factorize, logdet
from .factor import CholeskyFactor, ConditioningWarning, NotPositiveDefiniteError
from .ordering import amd, nested_dissection
from .schur import (
    ClosureError,
    SchurPlan,
    analyze_bulk,
    dense_cholesky_logdet,
    perturbed_logdet_family,
    reduce_to_subset,
    schur_complement,
)

__all__ = [
    "Analysis",
    "CholeskyFactor",
    "ClosureError",
    "ConditioningWarning",
    "NotPositiveDefiniteError",
    "SchurPlan",
    "amd",
    "analyze",
    "analyze_bulk",
    "dense_cholesky_logdet",
    "factorize",
    "logdet",
    "nested_dissection",
    "perturbed_logdet_family",
    "reduce_to_subset",
    "schur_complement",
]
