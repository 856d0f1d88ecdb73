"""Experiment orchestration: privacy-level sweeps over yearly protocols,
with utility, robustness, fairness, and influence audits emitted as
deterministic JSON/CSV reports.

Every cell of the (task x level x mechanism x seed) grid derives its rng
from a stable hash so it is independently reproducible, and every epsilon
in a report is recomputable from the logged (q, sigma, T, delta).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import (accountant, cohort as cohort_mod, dp_optim, fairness_audit,
               influence, metrics, models, objective_perturbation,
               shift_audit)
from .errors import ConfigurationError, DPTailsError

# Objective-perturbation budgets matched to the named privacy levels.
OBJPERT_LEVEL_EPS = {"low": 3.5e5, "high": 3.54}


@dataclass
class ExperimentConfig:
    cohort: cohort_mod.CohortConfig
    tasks: list = field(default_factory=lambda: [
        {"name": "outcome", "family": "lr-binary", "l2_lambda": 0.01}])
    privacy_levels: list = field(default_factory=lambda: ["none", "low", "high"])
    mechanisms: list = field(default_factory=lambda: ["dp-sgd"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    audits: list = field(default_factory=lambda: ["utility"])
    out_dir: str = "runs"
    learning_rate: float = 0.5
    epochs: int = 5
    batch_size: int = 64
    microbatch_count: int = 16
    objpert_lambda: float = 0.01
    influence_train_cap: int = 1000
    influence_test_cap: int = 300
    influence_panel: int = 100

    def __post_init__(self):
        if not self.seeds or not self.tasks or not self.privacy_levels:
            raise ConfigurationError(
                "seeds/tasks/privacy_levels: must be nonempty")
        for mech in self.mechanisms:
            if mech not in ("dp-sgd", "objective-perturbation"):
                raise ConfigurationError(f"mechanisms: unknown {mech!r}")
        for audit in self.audits:
            if audit not in ("utility", "robustness", "fairness", "influence"):
                raise ConfigurationError(f"audits: unknown {audit!r}")

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        raw["cohort"] = cohort_mod.CohortConfig.from_json(
            json.dumps(raw["cohort"]))
        return cls(**raw)

    @classmethod
    def from_json_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def stable_seed(*parts):
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def format_cell(mean, std, spend):
    eps = "inf" if not math.isfinite(spend.epsilon) else f"{spend.epsilon:.2f}"
    return f"{mean:.2f} +/- {std:.2f} ({eps}, {spend.delta:g})"


def _train_cell(split, task, level, mechanism, config, seed):
    if mechanism == "dp-sgd":
        train_config = dp_optim.DPTrainingConfig.from_level(
            level,
            batch_size=config.batch_size,
            microbatch_count=config.microbatch_count,
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            seed=seed)
        family_spec = {"family": task.get("family", "lr-binary"),
                       "l2_lambda": task.get("l2_lambda", 0.0),
                       "k": task.get("k", 2), "h": task.get("h", 16)}
        return dp_optim.train(family_spec, split, train_config)
    op_config = objective_perturbation.ObjPertConfig(
        eps_p=OBJPERT_LEVEL_EPS.get(level, 1.0),
        lam=config.objpert_lambda, seed=seed)
    return objective_perturbation.train_objective_perturbation(
        split, op_config, force_zero_noise=(level == "none"))


def yearly_protocol(cohort, task, level, mechanism, config, seed):
    """Train on prior years, test on each pivot year; returns per-year
    metric rows plus the across-year aggregate."""
    years = sorted(set(cohort.years.tolist()))
    if len(years) < 2:
        raise ConfigurationError("yearly protocol needs >= 2 years")
    rows = []
    for pivot in years[1:]:
        cell_seed = stable_seed(seed, task["name"], level, mechanism, pivot)
        split = cohort_mod.split_yearly(cohort, pivot, "cumulative")
        trained = _train_cell(split, task, level, mechanism, config, cell_seed)
        scores = models.predict(trained.params, split.test.features)[:, 1]
        rows.append({
            "year": int(pivot),
            "auroc": metrics.auroc(scores, split.test.labels),
            "auprc": metrics.auprc(scores, split.test.labels),
            "spend": trained.spend.to_dict(),
            "accounting_log": trained.accounting_log,
        })
    aurocs = [r["auroc"] for r in rows]
    aggregate = {"auroc_mean": float(np.mean(aurocs)),
                 "auroc_std": float(np.std(aurocs))}
    return rows, aggregate


def _robustness_audit(cohort, task, config, seed):
    """Domain-classifier significance and malignancy per pivot year, plus
    the gap-vs-malignancy Pearson correlation when enough years exist."""
    years = sorted(set(cohort.years.tolist()))
    reports, gaps, malignancies = [], [], []
    for pivot in years[1:]:
        split = cohort_mod.split_yearly(cohort, pivot, "cumulative")
        report, scorer = shift_audit.domain_classifier_significance(
            split.train, split.test, seed=stable_seed(seed, "shift", pivot),
            year=pivot)
        task_params = models.fit_lr_newton(
            split.train.features, split.train.labels,
            l2_lambda=task.get("l2_lambda", 0.01))
        # In-distribution reference: held-back half of the training years.
        half = split.train.n // 2
        in_scores = models.predict(
            task_params, split.train.features[half:])[:, 1]
        out_scores = models.predict(task_params, split.test.features)[:, 1]
        try:
            gap = (metrics.auroc(in_scores, split.train.labels[half:])
                   - metrics.auroc(out_scores, split.test.labels))
        except DPTailsError:
            gap = None
        if report.significant:
            shift_audit.shift_malignancy(report, split.test, scorer, task_params)
        reports.append(report.to_dict())
        if gap is not None and report.malignancy_accuracy is not None:
            gaps.append(gap)
            malignancies.append(report.malignancy_accuracy)
    correlation = None
    if len(gaps) >= 3:
        try:
            result = shift_audit.robustness_correlation(gaps, malignancies)
            correlation = {"r": result.statistic, "p_value": result.p_value,
                           "method": result.method}
        except DPTailsError as exc:
            correlation = {"error": str(exc)}
    return {"per_year": reports, "gap_malignancy_correlation": correlation}


def _fairness_audit(cohort, task, level, mechanism, config, seed):
    years = sorted(set(cohort.years.tolist()))
    per_year = []
    for pivot in years[1:]:
        cell_seed = stable_seed(seed, task["name"], level, mechanism,
                                "fairness", pivot)
        split = cohort_mod.split_yearly(cohort, pivot, "cumulative")
        trained = _train_cell(split, task, level, mechanism, config, cell_seed)
        scores = models.predict(trained.params, split.test.features)[:, 1]
        try:
            report = fairness_audit.fairness_gaps(
                scores, split.test.labels, split.test.groups, g1=0, g2=1)
            per_year.append({"year": int(pivot), **report.to_dict()})
        except DPTailsError as exc:
            per_year.append({"year": int(pivot), "error": str(exc)})
    return per_year


def _influence_audit(cohort, task, level, mechanism, config, seed):
    pivot = sorted(set(cohort.years.tolist()))[-1]
    split = cohort_mod.split_yearly(cohort, pivot, "cumulative")
    cell_seed = stable_seed(seed, task["name"], level, mechanism, "influence")
    trained = _train_cell(split, task, level, mechanism, config, cell_seed)
    params = trained.params
    train_sub = split.train.subset(slice(0, config.influence_train_cap))
    test_sub = split.test.subset(slice(0, config.influence_test_cap))
    engine = influence.InfluenceEngine(params, train_sub)
    matrix = engine.matrix(train_sub, test_sub)
    panel_k = min(config.influence_panel, len(matrix.test_ids))
    panel_ids = influence.top_variance_test_points(matrix, k=panel_k)
    panel_cols = [int(np.flatnonzero(matrix.test_ids == tid)[0])
                  for tid in panel_ids]
    panel = influence.InfluenceMatrix(
        values=matrix.values[:, panel_cols],
        train_ids=matrix.train_ids,
        test_ids=np.asarray(panel_ids),
        damping=matrix.damping,
        model_fingerprint=matrix.model_fingerprint)
    by_label = influence.group_influence(
        panel, {int(i): int(l) for i, l in zip(train_sub.ids, train_sub.labels)})
    by_group = influence.group_influence(
        panel, {int(i): int(g) for i, g in zip(train_sub.ids, train_sub.groups)})
    freq = influence.influencer_frequency(panel, "helpful")
    return {
        "sign_convention": influence.SIGN_CONVENTION,
        "panel_size": panel_k,
        "max_abs_influence": float(np.abs(panel.values).max()),
        "by_label": {"means": by_label.group_means,
                     "stds": by_label.group_stds,
                     "most_helpful_group": by_label.most_helpful_group,
                     "most_harmful_group": by_label.most_harmful_group},
        "by_group": {"means": by_group.group_means,
                     "stds": by_group.group_stds,
                     "most_helpful_group": by_group.most_helpful_group,
                     "most_harmful_group": by_group.most_harmful_group},
        "helpful_frequency": {"concentration": freq.concentration,
                              "counts": {str(k): v
                                         for k, v in sorted(freq.counts.items())}},
        "spend": trained.spend.to_dict(),
    }


def run_experiment(config: ExperimentConfig):
    """Execute the full grid; failed cells are recorded, not fatal.

    Returns (report dict, number of failed cells) and writes report.json
    plus the figure-feeding CSV tables under config.out_dir.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    base = cohort_mod.generate_cohort(config.cohort)

    cells = []
    failures = 0
    for task in config.tasks:
        for level in config.privacy_levels:
            for mechanism in config.mechanisms:
                for seed in config.seeds:
                    cell = {"task": task["name"], "level": level,
                            "mechanism": mechanism, "seed": seed}
                    try:
                        if "utility" in config.audits:
                            rows, agg = yearly_protocol(
                                base, task, level, mechanism, config, seed)
                            cell["utility"] = {"per_year": rows, **agg}
                        if "robustness" in config.audits and mechanism == "dp-sgd" \
                                and level == config.privacy_levels[0]:
                            cell["robustness"] = _robustness_audit(
                                base, task, config, seed)
                        if "fairness" in config.audits:
                            cell["fairness"] = _fairness_audit(
                                base, task, level, mechanism, config, seed)
                        if "influence" in config.audits and mechanism == "dp-sgd":
                            cell["influence"] = _influence_audit(
                                base, task, level, mechanism, config, seed)
                    except DPTailsError as exc:
                        cell["error"] = f"{type(exc).__name__}: {exc}"
                        failures += 1
                    cells.append(cell)

    aggregates = _table_blocks(config, cells)
    report = {"config_hash": _config_hash(config), "cells": cells,
              "aggregates": aggregates, "failed_cells": failures}
    _write_reports(config, report)
    return report, failures


def _table_blocks(config, cells):
    """Mean +/- std blocks over seeds per (task, level, mechanism)."""
    blocks = []
    for task in config.tasks:
        for level in config.privacy_levels:
            for mechanism in config.mechanisms:
                vals = [c["utility"]["auroc_mean"] for c in cells
                        if c.get("utility") is not None
                        and c["task"] == task["name"] and c["level"] == level
                        and c["mechanism"] == mechanism and "utility" in c]
                if not vals:
                    continue
                spends = [c["utility"]["per_year"][0]["spend"] for c in cells
                          if c["task"] == task["name"] and c["level"] == level
                          and c["mechanism"] == mechanism and "utility" in c]
                eps = spends[0]["epsilon"]
                spend = accountant.PrivacySpend(
                    epsilon=math.inf if eps == "inf" else float(eps),
                    delta=float(spends[0]["delta"]))
                blocks.append({
                    "task": task["name"], "level": level,
                    "mechanism": mechanism,
                    "auroc_mean": float(np.mean(vals)),
                    "auroc_std": float(np.std(vals)),
                    "cell_text": format_cell(float(np.mean(vals)),
                                             float(np.std(vals)), spend),
                })
    return blocks


def _config_hash(config):
    payload = json.dumps({
        "cohort": json.loads(config.cohort.to_json()),
        "tasks": config.tasks, "privacy_levels": config.privacy_levels,
        "mechanisms": config.mechanisms, "seeds": config.seeds,
        "audits": config.audits, "learning_rate": config.learning_rate,
        "epochs": config.epochs, "batch_size": config.batch_size,
        "microbatch_count": config.microbatch_count,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_reports(config, report):
    out = config.out_dir
    _write_json(os.path.join(out, "report.json"), report)

    with open(os.path.join(out, "utility_by_year.csv"), "w") as fh:
        fh.write("task,level,mechanism,seed,year,auroc,auprc\n")
        for cell in report["cells"]:
            for row in cell.get("utility", {}).get("per_year", []):
                fh.write(f"{cell['task']},{cell['level']},{cell['mechanism']},"
                         f"{cell['seed']},{row['year']},"
                         f"{row['auroc']!r},{row['auprc']!r}\n")

    with open(os.path.join(out, "malignancy.csv"), "w") as fh:
        fh.write("task,seed,year,malignancy_accuracy,p_value\n")
        for cell in report["cells"]:
            for row in cell.get("robustness", {}).get("per_year", []):
                mal = row["malignancy_accuracy"]
                fh.write(f"{cell['task']},{cell['seed']},{row['year']},"
                         f"{'' if mal is None else repr(mal)},"
                         f"{row['p_value']!r}\n")

    with open(os.path.join(out, "fairness_by_year.csv"), "w") as fh:
        fh.write("task,level,mechanism,seed,year,auroc_gap,parity_gap,"
                 "recall_gap,specificity_gap\n")
        for cell in report["cells"]:
            for row in cell.get("fairness", []):
                if "error" in row:
                    continue
                vals = [row[k] for k in ("auroc_gap", "parity_gap",
                                         "recall_gap", "specificity_gap")]
                text = ",".join("" if v is None else repr(v) for v in vals)
                fh.write(f"{cell['task']},{cell['level']},{cell['mechanism']},"
                         f"{cell['seed']},{row['year']},{text}\n")

    influence_cells = {f"{c['task']}|{c['level']}|{c['seed']}": c["influence"]
                       for c in report["cells"] if "influence" in c}
    if influence_cells:
        _write_json(os.path.join(out, "influence_summary.json"), influence_cells)
