"""Synthetic long-tailed, yearly-drifting classification cohorts.

Records are drawn from per-(class, year) Gaussian clusters with a shared
isotropic covariance. Class imbalance is controlled purely by prevalence,
year-over-year drift translates cluster means along a fixed random
direction, and an optional transition year adds a one-off larger shift on
top of the drift. Cluster means are centred and the noise scale chosen so
each feature column has population mean 0 and variance 1; no empirical
re-scaling is applied, so configured drift distances are preserved
exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParseError, SplitError


@dataclass(frozen=True)
class CohortConfig:
    n: int
    d: int
    num_classes: int = 2
    positive_prevalence: float | tuple = 0.5
    group_prevalences: tuple = (0.8, 0.2)
    group_label_association: float = 0.0
    years: tuple = (2001, 2001)          # inclusive (first, last)
    yearly_drift: float = 0.0
    transition_year: int | None = None
    transition_shift: float = 0.0
    class_separation: float = 2.0
    seed: int = 0

    def class_prevalences(self):
        p = self.positive_prevalence
        if np.isscalar(p):
            if self.num_classes != 2:
                raise ConfigurationError(
                    "positive_prevalence: scalar form requires num_classes=2")
            return np.array([1.0 - float(p), float(p)])
        p = np.asarray(p, dtype=float)
        if len(p) != self.num_classes:
            raise ConfigurationError(
                "positive_prevalence: need one fraction per class")
        return p

    def year_list(self):
        first, last = self.years
        return list(range(int(first), int(last) + 1))

    def validate(self):
        prev = self.class_prevalences()
        if np.any(prev <= 0) or np.any(prev >= 1):
            raise ConfigurationError(
                "positive_prevalence: each class fraction must lie in (0,1)")
        if abs(prev.sum() - 1.0) > 1e-9:
            raise ConfigurationError(
                "positive_prevalence: class fractions must sum to 1")
        gp = np.asarray(self.group_prevalences, dtype=float)
        if np.any(gp <= 0) or np.any(gp >= 1) or abs(gp.sum() - 1.0) > 1e-9:
            raise ConfigurationError(
                "group_prevalences: fractions must lie in (0,1) and sum to 1")
        if not 0.0 <= self.group_label_association <= 1.0:
            raise ConfigurationError(
                "group_label_association: must lie in [0,1]")
        if not self.year_list():
            raise ConfigurationError("years: empty year range")
        if self.yearly_drift < 0 or self.transition_shift < 0:
            raise ConfigurationError(
                "yearly_drift/transition_shift: drift magnitudes must be >= 0")
        if self.n < 10 * self.num_classes:
            raise ConfigurationError("n: need at least 10 records per class")
        if self.d < 1:
            raise ConfigurationError("d: need at least one feature")

    def to_json(self):
        return json.dumps(
            {
                "n": self.n, "d": self.d, "num_classes": self.num_classes,
                "positive_prevalence": self.positive_prevalence
                if np.isscalar(self.positive_prevalence)
                else list(self.positive_prevalence),
                "group_prevalences": list(self.group_prevalences),
                "group_label_association": self.group_label_association,
                "years": list(self.years),
                "yearly_drift": self.yearly_drift,
                "transition_year": self.transition_year,
                "transition_shift": self.transition_shift,
                "class_separation": self.class_separation,
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        for key in ("positive_prevalence", "group_prevalences", "years"):
            if key in raw and isinstance(raw[key], list):
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass
class Cohort:
    features: np.ndarray   # n x d, float64
    labels: np.ndarray     # n, int
    groups: np.ndarray     # n, int
    years: np.ndarray      # n, int
    ids: np.ndarray        # n, int, unique

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, mask_or_index):
        return Cohort(
            features=self.features[mask_or_index].copy(),
            labels=self.labels[mask_or_index].copy(),
            groups=self.groups[mask_or_index].copy(),
            years=self.years[mask_or_index].copy(),
            ids=self.ids[mask_or_index].copy(),
        )

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.groups, other.groups)
            and np.array_equal(self.years, other.years)
            and np.array_equal(self.ids, other.ids)
        )


@dataclass
class CohortSplit:
    train: Cohort
    test: Cohort
    protocol: str          # "cumulative" | "single-year"
    pivot_year: int


def class_year_means(config: CohortConfig):
    """Centred cluster means, keyed by (class, year).

    Deterministic in the config seed; the same means are used by
    generate_cohort, so drift distances between consecutive years can be
    checked exactly.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    class_dir = rng.normal(size=config.d)
    class_dir /= np.linalg.norm(class_dir)
    drift_dir = rng.normal(size=config.d)
    drift_dir /= np.linalg.norm(drift_dir)

    K = config.num_classes
    years = config.year_list()
    y0 = years[0]
    means = {}
    for k in range(K):
        class_mean = (k - (K - 1) / 2.0) * config.class_separation * class_dir
        for y in years:
            shift = (y - y0) * config.yearly_drift
            if config.transition_year is not None and y >= config.transition_year:
                shift += config.transition_shift
            means[(k, y)] = class_mean + shift * drift_dir

    # Centre so the population feature mean is exactly zero.
    prev = config.class_prevalences()
    w_year = 1.0 / len(years)
    overall = np.zeros(config.d)
    for (k, y), mu in means.items():
        overall += prev[k] * w_year * mu
    return {key: mu - overall for key, mu in means.items()}


def _noise_scale(config, means):
    # Per-column variance budget: between-cluster variance plus noise
    # variance should total 1. Floor keeps the generator usable when
    # configured shifts already exceed unit variance.
    prev = config.class_prevalences()
    years = config.year_list()
    w_year = 1.0 / len(years)
    between = np.zeros(config.d)
    for (k, y), mu in means.items():
        between += prev[k] * w_year * mu ** 2
    return np.sqrt(np.maximum(1.0 - between, 0.04))


def generate_cohort(config: CohortConfig) -> Cohort:
    config.validate()
    means = class_year_means(config)
    scale = _noise_scale(config, means)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    n, d = config.n, config.d
    prev = config.class_prevalences()
    years = np.array(config.year_list())

    labels = rng.choice(config.num_classes, size=n, p=prev)
    year_tags = rng.choice(years, size=n)

    gp = np.asarray(config.group_prevalences, dtype=float)
    G = len(gp)
    groups = rng.choice(G, size=n, p=gp)
    coupled = rng.random(n) < config.group_label_association
    groups[coupled] = labels[coupled] % G

    mu = np.empty((n, d))
    for (k, y), m in means.items():
        mask = (labels == k) & (year_tags == y)
        mu[mask] = m
    features = mu + rng.normal(size=(n, d)) * scale

    return Cohort(
        features=features,
        labels=labels.astype(np.int64),
        groups=groups.astype(np.int64),
        years=year_tags.astype(np.int64),
        ids=np.arange(n, dtype=np.int64),
    )


def split_yearly(cohort: Cohort, pivot_year: int, protocol="cumulative") -> CohortSplit:
    if pivot_year not in set(cohort.years.tolist()):
        raise SplitError(f"pivot year {pivot_year} not present in cohort")
    if protocol == "cumulative":
        train_mask = cohort.years < pivot_year
        if not train_mask.any():
            raise SplitError(f"no data prior to pivot year {pivot_year}")
        test_mask = cohort.years == pivot_year
        return CohortSplit(cohort.subset(train_mask), cohort.subset(test_mask),
                           "cumulative", pivot_year)
    if protocol == "single-year":
        idx = np.flatnonzero(cohort.years == pivot_year)
        return CohortSplit(cohort.subset(idx[0::2]), cohort.subset(idx[1::2]),
                           "single-year", pivot_year)
    raise SplitError(f"unknown protocol {protocol!r}")


def write_cohort(cohort: Cohort, path):
    header = ["id", "year", "group", "label"] + [f"f{j}" for j in range(cohort.d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(cohort.n):
            row = [int(cohort.ids[i]), int(cohort.years[i]),
                   int(cohort.groups[i]), int(cohort.labels[i])]
            row += [np.format_float_scientific(v, unique=True)
                    for v in cohort.features[i]]
            writer.writerow(row)


def read_cohort(path, num_classes=None) -> Cohort:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, header required")
        if header[:4] != ["id", "year", "group", "label"]:
            raise ParseError("header must start with id,year,group,label")
        d = len(header) - 4
        for j, name in enumerate(header[4:]):
            if name != f"f{j}":
                raise ParseError(f"feature column {j} must be named f{j}",
                                 row=0, column=4 + j)

        ids, years, groups, labels, feats = [], [], [], [], []
        for r, row in enumerate(reader, start=1):
            if len(row) != 4 + d:
                raise ParseError(f"expected {4 + d} cells, got {len(row)}", row=r)
            try:
                ids.append(int(row[0]))
                years.append(int(row[1]))
                groups.append(int(row[2]))
                labels.append(int(row[3]))
            except ValueError as exc:
                raise ParseError(f"non-integer metadata cell: {exc}", row=r)
            try:
                feats.append([float(c) for c in row[4:]])
            except ValueError:
                bad = next(j for j, c in enumerate(row[4:])
                           if not _is_float(c))
                raise ParseError("non-numeric feature cell", row=r, column=4 + bad)
            if labels[-1] < 0:
                raise ParseError("label out of range", row=r, column=3)
            if num_classes is not None and labels[-1] >= num_classes:
                raise ParseError(
                    f"label {labels[-1]} out of range [0,{num_classes})",
                    row=r, column=3)
            if groups[-1] < 0:
                raise ParseError("group out of range", row=r, column=2)

    n = len(ids)
    if len(set(ids)) != n:
        raise ParseError("duplicate record ids")
    return Cohort(
        features=np.asarray(feats, dtype=float).reshape(n, d),
        labels=np.asarray(labels, dtype=np.int64),
        groups=np.asarray(groups, dtype=np.int64),
        years=np.asarray(years, dtype=np.int64),
        ids=np.asarray(ids, dtype=np.int64),
    )


def _is_float(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False
