"""Group-fairness gaps between a reference group and a comparison group.

Gaps are always group-1 quantity minus group-2 quantity, so positive
values indicate a bias towards group 1:
  parity gap      (TP1+FP1)/N1 - (TP2+FP2)/N2
  recall gap      TP1/(TP1+FN1) - TP2/(TP2+FN2)
  specificity gap TN1/(TN1+FP1) - TN2/(TN2+FP2)
  auroc gap       AUROC1 - AUROC2
A gap whose denominator is zero in either group is reported as undefined
with a reason, never as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .errors import DomainError, UndefinedMetricError


@dataclass
class FairnessReport:
    group_1: int
    group_2: int
    threshold: float
    auroc_gap: float | None
    parity_gap: float | None
    recall_gap: float | None
    specificity_gap: float | None
    per_group_confusion: dict
    per_group_auroc: dict
    undefined_reasons: dict = field(default_factory=dict)

    def gaps(self):
        return {"auroc_gap": self.auroc_gap, "parity_gap": self.parity_gap,
                "recall_gap": self.recall_gap,
                "specificity_gap": self.specificity_gap}

    def to_dict(self):
        return {
            "group_1": self.group_1, "group_2": self.group_2,
            "threshold": self.threshold, **self.gaps(),
            "per_group_confusion": {
                g: {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn}
                for g, c in self.per_group_confusion.items()},
            "per_group_auroc": self.per_group_auroc,
            "undefined_reasons": self.undefined_reasons,
            "sign_convention": "positive values favor group_1",
        }


def _rates(cm: metrics.ConfusionMatrix):
    out = {}
    out["parity"] = (cm.tp + cm.fp) / cm.n if cm.n > 0 else None
    out["recall"] = cm.tp / (cm.tp + cm.fn) if (cm.tp + cm.fn) > 0 else None
    out["specificity"] = cm.tn / (cm.tn + cm.fp) if (cm.tn + cm.fp) > 0 else None
    return out


def fairness_gaps(scores, labels, groups, g1, g2, threshold=0.5) -> FairnessReport:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    g = np.asarray(groups).ravel().astype(np.int64)

    masks = {g1: g == g1, g2: g == g2}
    for gid, mask in masks.items():
        if not mask.any():
            raise DomainError(f"group {gid} is empty")

    cms, aurocs, rates = {}, {}, {}
    reasons = {}
    for gid, mask in masks.items():
        cms[gid] = metrics.confusion(s[mask], y[mask], threshold)
        rates[gid] = _rates(cms[gid])
        try:
            aurocs[gid] = metrics.auroc(s[mask], y[mask])
        except UndefinedMetricError as exc:
            aurocs[gid] = None
            reasons[f"auroc_group_{gid}"] = str(exc)

    def gap(name):
        a, b = rates[g1][name], rates[g2][name]
        if a is None or b is None:
            side = g1 if a is None else g2
            reasons[f"{name}_gap"] = f"zero denominator in group {side}"
            return None
        return a - b

    auroc_gap = None
    if aurocs[g1] is not None and aurocs[g2] is not None:
        auroc_gap = aurocs[g1] - aurocs[g2]
    else:
        reasons.setdefault("auroc_gap", "AUROC undefined in one group")

    return FairnessReport(
        group_1=int(g1), group_2=int(g2), threshold=float(threshold),
        auroc_gap=auroc_gap,
        parity_gap=gap("parity"),
        recall_gap=gap("recall"),
        specificity_gap=gap("specificity"),
        per_group_confusion=cms,
        per_group_auroc=aurocs,
        undefined_reasons=reasons,
    )
