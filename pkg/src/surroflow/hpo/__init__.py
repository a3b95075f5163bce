"""Hyperparameter search: spaces, samplers, pruning, and study records."""

from surroflow.hpo.space import (
    Categorical,
    IntUniform,
    LogUniform,
    SearchSpace,
    Uniform,
    domain_from_dict,
    domain_to_dict,
    tighten_space,
)
from surroflow.hpo.samplers import random_suggest, tpe_suggest
from surroflow.hpo.pruner import MedianPrunerConfig, median_prune_decision
from surroflow.hpo.study import (
    HPOBudget,
    StudyRecord,
    TrialFailed,
    TrialPruned,
    TrialRecord,
    TrialState,
    run_hpo,
)

__all__ = [
    "Uniform",
    "LogUniform",
    "IntUniform",
    "Categorical",
    "SearchSpace",
    "tighten_space",
    "domain_to_dict",
    "domain_from_dict",
    "random_suggest",
    "tpe_suggest",
    "MedianPrunerConfig",
    "median_prune_decision",
    "HPOBudget",
    "TrialState",
    "TrialRecord",
    "TrialPruned",
    "TrialFailed",
    "StudyRecord",
    "run_hpo",
]
