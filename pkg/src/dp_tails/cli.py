"""Command line interface.

Subcommands: generate-data, train, account, audit-shift, audit-fairness,
audit-influence, run. Exit codes: 0 success, 2 configuration error,
3 partial grid failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import (accountant, cohort as cohort_mod, dp_optim, fairness_audit,
               harness, influence, models, objective_perturbation,
               shift_audit)
from .errors import ConfigurationError, DPTailsError


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump(payload, path=None):
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_generate_data(args):
    config = cohort_mod.CohortConfig.from_json(json.dumps(_load_json(args.config)))
    if args.seed is not None:
        config = cohort_mod.CohortConfig.from_json(json.dumps(
            {**json.loads(config.to_json()), "seed": args.seed}))
    if not args.out:
        raise ConfigurationError("generate-data requires --out")
    cohort = cohort_mod.generate_cohort(config)
    cohort_mod.write_cohort(cohort, args.out)
    return 0


def cmd_train(args):
    raw = _load_json(args.config)
    cohort = cohort_mod.read_cohort(raw["cohort_csv"])
    split = cohort_mod.split_yearly(cohort, raw["pivot_year"],
                                    raw.get("protocol", "cumulative"))
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    mechanism = raw.get("mechanism", "dp-sgd")
    if mechanism == "dp-sgd":
        train_raw = dict(raw.get("training", {}))
        level = train_raw.pop("privacy_level", None)
        train_raw["seed"] = seed
        if level is not None:
            config = dp_optim.DPTrainingConfig.from_level(level, **train_raw)
        else:
            config = dp_optim.DPTrainingConfig(**train_raw)
        trained = dp_optim.train(raw.get("family_spec", {}), split, config)
    elif mechanism == "objective-perturbation":
        op = objective_perturbation.ObjPertConfig(seed=seed,
                                                  **raw.get("objpert", {}))
        trained = objective_perturbation.train_objective_perturbation(split, op)
    else:
        raise ConfigurationError(f"unknown mechanism {mechanism!r}")
    _dump(trained.to_dict(), args.out)
    return 0


def cmd_account(args):
    spend, log = accountant.spend_for_training(
        q=args.q, sigma=args.sigma, steps=args.steps, delta=args.delta)
    _dump({"epsilon": spend.epsilon, "delta": spend.delta,
           "argmin_order": spend.argmin_order, "caveats": log["caveats"]},
          args.out)
    return 0


def cmd_audit_shift(args):
    raw = _load_json(args.config)
    cohort = cohort_mod.read_cohort(raw["cohort_csv"])
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    years = sorted(set(cohort.years.tolist()))
    reports = []
    for pivot in years[1:]:
        split = cohort_mod.split_yearly(cohort, pivot, "cumulative")
        report, scorer = shift_audit.domain_classifier_significance(
            split.train, split.test, seed=harness.stable_seed(seed, pivot),
            year=pivot)
        if report.significant:
            task_params = models.fit_lr_newton(
                split.train.features, split.train.labels,
                l2_lambda=raw.get("l2_lambda", 0.01))
            shift_audit.shift_malignancy(report, split.test, scorer, task_params)
        reports.append(report.to_dict())
    _dump(reports, args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("year,malignancy_accuracy,p_value\n")
            for r in reports:
                mal = r["malignancy_accuracy"]
                fh.write(f"{r['year']},{'' if mal is None else repr(mal)},"
                         f"{r['p_value']!r}\n")
    return 0


def cmd_audit_fairness(args):
    raw = _load_json(args.config)
    cohort = cohort_mod.read_cohort(raw["cohort_csv"])
    params = models.ModelParams.from_json(json.dumps(raw["params"]))
    scores = models.predict(params, cohort.features)[:, 1]
    report = fairness_audit.fairness_gaps(
        scores, cohort.labels, cohort.groups,
        g1=raw.get("group_1", 0), g2=raw.get("group_2", 1),
        threshold=raw.get("threshold", 0.5))
    _dump(report.to_dict(), args.out)
    return 0


def cmd_audit_influence(args):
    raw = _load_json(args.config)
    train_cohort = cohort_mod.read_cohort(raw["train_csv"])
    test_cohort = cohort_mod.read_cohort(raw["test_csv"])
    params = models.ModelParams.from_json(json.dumps(raw["params"]))
    engine = influence.InfluenceEngine(params, train_cohort,
                                       damping=raw.get("damping"))
    matrix = engine.matrix(train_cohort, test_cohort)
    summary = influence.group_influence(
        matrix, {int(i): int(l) for i, l in
                 zip(train_cohort.ids, train_cohort.labels)})
    _dump({"sign_convention": influence.SIGN_CONVENTION,
           "by_label": {"means": summary.group_means,
                        "stds": summary.group_stds,
                        "most_helpful_group": summary.most_helpful_group,
                        "most_harmful_group": summary.most_harmful_group}},
          args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("train_id," + ",".join(str(int(t))
                                            for t in matrix.test_ids) + "\n")
            for i, tid in enumerate(matrix.train_ids):
                fh.write(str(int(tid)) + ","
                         + ",".join(repr(v) for v in matrix.values[i]) + "\n")
    return 0


def cmd_run(args):
    raw = _load_json(args.config)
    if args.out:
        raw["out_dir"] = args.out
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    config = harness.ExperimentConfig.from_dict(raw)
    _, failures = harness.run_experiment(config)
    return 3 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dp-tails")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_config=True):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.set_defaults(fn=fn)
        return p

    add("generate-data", cmd_generate_data)
    add("train", cmd_train)
    p = add("account", cmd_account, needs_config=False)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--delta", type=float, default=accountant.DEFAULT_DELTA)
    p = add("audit-shift", cmd_audit_shift)
    p.add_argument("--csv", default=None)
    add("audit-fairness", cmd_audit_fairness)
    p = add("audit-influence", cmd_audit_influence)
    p.add_argument("--csv", default=None)
    add("run", cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DPTailsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
