"""Differentially private training and auditing toolkit for synthetic
long-tailed, yearly-drifting cohorts."""

from . import (accountant, cohort, dp_optim, errors, fairness_audit,
               harness, influence, metrics, models, objective_perturbation,
               shift_audit)

__all__ = [
    "accountant", "cohort", "dp_optim", "errors", "fairness_audit",
    "harness", "influence", "metrics", "models", "objective_perturbation",
    "shift_audit",
]

__version__ = "0.1.0"
