"""Evaluation and statistical primitives.

AUROC uses tie-adjusted pair counting (ties worth 0.5), AUPRC is average
precision over the descending-score rank walk, the binomial test is the
exact two-sided probability-mass method computed in log space, and the
Pearson test uses the t-transform with n-2 degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import UndefinedCorrelationError, UndefinedMetricError


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class TestResult:
    statistic: float
    p_value: float
    method: str


def _binary_arrays(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise UndefinedMetricError("scores and labels must have equal length")
    if not np.isin(y, (0, 1)).all():
        raise UndefinedMetricError("labels must be binary")
    return s, y


def auroc(scores, labels) -> float:
    s, y = _binary_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    ranks = stats.rankdata(s)  # midranks handle ties as half-weight pairs
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    s, y = _binary_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive")
    order = np.lexsort((np.arange(len(s)), -s))
    y_sorted = y[order]
    cum_pos = np.cumsum(y_sorted)
    ranks = np.arange(1, len(s) + 1)
    precision_at = cum_pos / ranks
    return float(precision_at[y_sorted == 1].mean())


def confusion(scores, labels, threshold=0.5) -> ConfusionMatrix:
    s, y = _binary_arrays(scores, labels)
    pred = s >= threshold
    return ConfusionMatrix(
        tp=int(np.sum(pred & (y == 1))),
        fp=int(np.sum(pred & (y == 0))),
        tn=int(np.sum(~pred & (y == 0))),
        fn=int(np.sum(~pred & (y == 1))),
    )


def binomial_test(successes, trials, p0=0.5) -> TestResult:
    """Exact two-sided binomial test: sum the probability of every
    outcome no more likely than the observed one."""
    k, n = int(successes), int(trials)
    if n < 1 or not 0 <= k <= n:
        raise UndefinedMetricError("need 0 <= successes <= trials, trials >= 1")
    if not 0.0 < p0 < 1.0:
        raise UndefinedMetricError("p0 must lie in (0,1)")
    j = np.arange(n + 1)
    log_pmf = (gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
               + j * np.log(p0) + (n - j) * np.log1p(-p0))
    cutoff = log_pmf[k] + np.log1p(1e-12)
    include = log_pmf <= cutoff
    # The whole pmf sums to exactly 1; avoid returning 1 - float dust.
    p = 1.0 if include.all() else float(np.exp(log_pmf[include]).sum())
    return TestResult(statistic=k / n, p_value=min(p, 1.0),
                      method="exact-binomial-two-sided")


def pearson(x, y) -> TestResult:
    xa = np.asarray(x, dtype=float).ravel()
    ya = np.asarray(y, dtype=float).ravel()
    n = len(xa)
    if len(ya) != n or n < 3:
        raise UndefinedCorrelationError("need equal-length vectors, n >= 3")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise UndefinedCorrelationError("zero variance input")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = float(xc @ xc)
    sy = float(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance input")
    r = float(xc @ yc / np.sqrt(sx * sy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * np.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), df=n - 2))
    return TestResult(statistic=r, p_value=p, method="pearson-t")


def micro_average_scores(prob_matrix, labels):
    """One-vs-rest binarization for multiclass AUROC/AUPRC (micro)."""
    P = np.asarray(prob_matrix, dtype=float)
    y = np.asarray(labels).ravel().astype(np.int64)
    k = P.shape[1]
    onehot = np.zeros_like(P)
    onehot[np.arange(len(y)), y] = 1.0
    return P.ravel(), onehot.ravel().astype(np.int64), k
