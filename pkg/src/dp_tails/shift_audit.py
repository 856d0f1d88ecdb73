"""Dataset-shift significance and malignancy via a domain classifier.

A binary classifier is trained to tell training-distribution records from
test-distribution records on a balanced, 70/30 stratified mixture; its
evaluation accuracy is tested against chance with the exact binomial test.
Only when the shift is significant is malignancy diagnosed: the task
model's accuracy on the test records the domain classifier most
confidently places in the test distribution (lower = more malignant).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics, models
from .cohort import Cohort
from .errors import InsufficientDataError, ProcedureOrderError

ALPHA = 0.05


@dataclass
class ShiftReport:
    year: int
    domain_accuracy: float
    n_eval: int
    p_value: float
    significant: bool
    malignancy_accuracy: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "year": self.year,
            "domain_accuracy": self.domain_accuracy,
            "n_eval": self.n_eval,
            "p_value": self.p_value,
            "significant": self.significant,
            "malignancy_accuracy": self.malignancy_accuracy,
            "notes": self.notes,
        }


def _default_domain_fit(X, y, seed):
    params = models.fit_lr_newton(X, y, l2_lambda=1e-2)
    return lambda feats: models.predict(params, feats)[:, 1]


def domain_classifier_significance(train_cohort: Cohort, test_cohort: Cohort,
                                   seed=0, year=0, fit_fn=None):
    """Returns (ShiftReport without malignancy, domain scorer callable)."""
    if train_cohort.n < 10 or test_cohort.n < 10:
        raise InsufficientDataError(
            "need at least 10 records on each side of the shift test")
    rng = np.random.default_rng(np.random.SeedSequence([seed, int(year), 4]))

    m = min(train_cohort.n, test_cohort.n)
    side_idx = []
    for cohort in (train_cohort, test_cohort):
        idx = np.arange(cohort.n)
        if cohort.n > m:
            idx = np.sort(rng.choice(cohort.n, size=m, replace=False))
        side_idx.append(idx)

    X = np.vstack([train_cohort.features[side_idx[0]],
                   test_cohort.features[side_idx[1]]])
    origin = np.concatenate([np.zeros(m, dtype=int), np.ones(m, dtype=int)])

    # Stratified 70/30 fit/eval split of the balanced mixture.
    fit_rows, eval_rows = [], []
    for label in (0, 1):
        rows = np.flatnonzero(origin == label)
        rows = rng.permutation(rows)
        n_fit = int(round(0.7 * len(rows)))
        fit_rows.append(rows[:n_fit])
        eval_rows.append(rows[n_fit:])
    fit_rows = np.concatenate(fit_rows)
    eval_rows = np.concatenate(eval_rows)

    fit_fn = fit_fn or _default_domain_fit
    scorer = fit_fn(X[fit_rows], origin[fit_rows], seed)

    eval_scores = np.asarray(scorer(X[eval_rows]), dtype=float)
    correct = int(np.sum((eval_scores >= 0.5).astype(int) == origin[eval_rows]))
    n_eval = len(eval_rows)
    accuracy = correct / n_eval
    result = metrics.binomial_test(correct, n_eval, 0.5)
    report = ShiftReport(
        year=int(year),
        domain_accuracy=accuracy,
        n_eval=n_eval,
        p_value=result.p_value,
        significant=result.p_value < ALPHA,
        notes=["balanced mixture, stratified 70/30 fit/eval split"],
    )
    return report, scorer


def shift_malignancy(report: ShiftReport, test_cohort: Cohort, domain_scorer,
                     task_params: models.ModelParams, top_k=100) -> float:
    """Task accuracy on the test records most confidently flagged as
    test-distribution; requires a significant report first."""
    if not report.significant:
        raise ProcedureOrderError(
            "malignancy is only diagnosed after a significant shift test")
    scores = np.asarray(domain_scorer(test_cohort.features), dtype=float)
    k = min(top_k, test_cohort.n)
    order = np.lexsort((test_cohort.ids, -scores))
    chosen = order[:k]
    probs = models.predict(task_params, test_cohort.features[chosen])[:, 1]
    preds = (probs >= 0.5).astype(int)
    acc = float(np.mean(preds == test_cohort.labels[chosen]))
    report.malignancy_accuracy = acc
    report.notes.append(f"malignancy over top {k} most-confident test records")
    return acc


def robustness_correlation(generalization_gaps, malignancies) -> metrics.TestResult:
    """Pearson correlation between yearly generalization gaps and
    malignancy accuracies; positive correlation with (1 - malignancy)
    indicates a lack of robustness."""
    result = metrics.pearson(generalization_gaps, malignancies)
    return metrics.TestResult(
        statistic=result.statistic, p_value=result.p_value,
        method=result.method + "; positive gap-vs-(1-malignancy) correlation "
                               "means a lack of robustness")
