"""Non-private SGD/Adam and differentially private training with
per-microbatch clipping and Gaussian noise.

A step averages the minibatch into `microbatch_count` equal microbatches,
clips each microbatch-mean gradient to norm C, sums, adds N(0, sigma^2 C^2 I),
and divides by the microbatch count. microbatch_count = batch_size gives
true per-example clipping. The last partial batch of every epoch is
dropped so the accountant's sampling rate q = L/n is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import accountant, models
from .cohort import CohortSplit
from .errors import (ConfigurationError, DomainError, NumericError,
                     TrainingError)

PRIVACY_LEVELS = {
    "none": (None, 0.0),
    "low": (5.0, 0.1),
    "high": (1.0, 1.0),
}


@dataclass
class DPTrainingConfig:
    clip_norm: float | None = None
    noise_multiplier: float = 0.0
    batch_size: int = 64
    microbatch_count: int = 16
    learning_rate: float = 0.1
    epochs: int = 10
    optimizer: str = "sgd"
    seed: int = 0
    privacy_level_name: str = "custom"
    delta: float = accountant.DEFAULT_DELTA

    def __post_init__(self):
        if self.privacy_level_name in PRIVACY_LEVELS:
            expect = PRIVACY_LEVELS[self.privacy_level_name]
            if (self.clip_norm, self.noise_multiplier) != expect:
                raise ConfigurationError(
                    f"privacy_level_name={self.privacy_level_name!r} binds to "
                    f"(clip_norm, noise_multiplier)={expect}")
        elif self.privacy_level_name != "custom":
            raise ConfigurationError(
                f"privacy_level_name: unknown level {self.privacy_level_name!r}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigurationError("clip_norm: must be > 0 or absent")
        if self.noise_multiplier < 0:
            raise ConfigurationError("noise_multiplier: must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size/epochs: must be positive")
        if self.batch_size % self.microbatch_count != 0:
            raise ConfigurationError(
                "microbatch_count: must divide batch_size")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate: must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError("optimizer: must be sgd or adam")

    @classmethod
    def from_level(cls, name, **kwargs):
        if name not in PRIVACY_LEVELS:
            raise ConfigurationError(f"unknown privacy level {name!r}")
        clip, sigma = PRIVACY_LEVELS[name]
        return cls(clip_norm=clip, noise_multiplier=sigma,
                   privacy_level_name=name, **kwargs)

    @property
    def private(self):
        return self.clip_norm is not None


@dataclass
class TrainedModel:
    params: models.ModelParams
    spend: accountant.PrivacySpend
    training_trace: list
    steps_taken: int
    mechanism: str = "dp-sgd"
    accounting_log: dict = field(default_factory=dict)

    def to_dict(self):
        import json
        return {
            "params": json.loads(self.params.to_json()),
            "spend": self.spend.to_dict(),
            "training_trace": self.training_trace,
            "steps_taken": self.steps_taken,
            "mechanism": self.mechanism,
            "accounting_log": self.accounting_log,
        }


def clip_gradient(g, clip_norm):
    """Rescale g to norm <= clip_norm, preserving direction."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient")
    if clip_norm <= 0:
        raise DomainError("clip norm must be > 0")
    return g / max(1.0, float(np.linalg.norm(g)) / clip_norm)


def _noised_batch_gradient(params, X, y, config, rng):
    """Mean of clipped microbatch gradients plus scaled Gaussian noise."""
    _, G = models.loss_and_per_example_grads(params, X, y)
    if not config.private:
        return G.mean(axis=0)
    m = config.microbatch_count
    n = G.shape[0]
    if n % m != 0:
        raise ConfigurationError("microbatch_count must divide batch size")
    micro_means = G.reshape(m, n // m, -1).mean(axis=1)
    norms = np.linalg.norm(micro_means, axis=1)
    factors = np.maximum(1.0, norms / config.clip_norm)
    total = (micro_means / factors[:, None]).sum(axis=0)
    if config.noise_multiplier > 0:
        total = total + rng.normal(
            scale=config.noise_multiplier * config.clip_norm,
            size=total.shape)
    return total / m


def dp_sgd_step(params, features, labels, config, rng):
    """One private SGD step; pure in (params, data, rng state)."""
    g = _noised_batch_gradient(params, np.asarray(features, dtype=float),
                               labels, config, rng)
    return params.copy_with(params.theta - config.learning_rate * g)


class _AdamState:
    def __init__(self, size, beta1=0.9, beta2=0.999, eps_hat=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps_hat = beta1, beta2, eps_hat

    def direction(self, g):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return mhat / (np.sqrt(vhat) + self.eps_hat)


def train(family_spec, split: CohortSplit, config: DPTrainingConfig) -> TrainedModel:
    """Train on the split's train side with shuffled fixed-size batches.

    family_spec: dict with keys family, k (classes), h, l2_lambda; the
    input dimension is taken from the data.
    """
    train_cohort = split.train
    n = train_cohort.n
    if n == 0:
        raise DomainError("empty training cohort")
    X = train_cohort.features
    y = train_cohort.labels

    params = models.init_params(
        family_spec.get("family", "lr-binary"), X.shape[1],
        k=family_spec.get("k", 2), h=family_spec.get("h", 16),
        l2_lambda=family_spec.get("l2_lambda", 0.0),
        seed=config.seed)

    L = min(config.batch_size, n)
    if L < config.batch_size and L % config.microbatch_count != 0:
        raise ConfigurationError(
            "batch_size exceeds cohort size and microbatch_count does not "
            "divide the reduced batch")
    steps_per_epoch = n // L
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    adam = _AdamState(params.theta.shape[0]) if config.optimizer == "adam" else None

    trace = []
    steps = 0
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for b in range(steps_per_epoch):
            idx = perm[b * L:(b + 1) * L]
            loss, _ = models.loss_and_per_example_grads(params, X[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingError("training diverged (non-finite loss)",
                                    epoch=epoch)
            g = _noised_batch_gradient(params, X[idx], y[idx], config, rng)
            if adam is not None:
                g = adam.direction(g)
            params = params.copy_with(params.theta - config.learning_rate * g)
            epoch_losses.append(loss)
            steps += 1
        trace.append(float(np.mean(epoch_losses)) if epoch_losses else math.nan)

    if not config.private:
        spend = accountant.PrivacySpend(epsilon=math.inf, delta=0.0)
        log = {"q": None, "sigma": None, "steps": steps, "delta": 0.0,
               "caveats": ["non-private run"]}
    elif config.noise_multiplier == 0.0 and steps > 0:
        spend = accountant.PrivacySpend(epsilon=math.inf, delta=0.0)
        log = {"q": L / n, "sigma": 0.0, "steps": steps, "delta": 0.0,
               "caveats": ["clipping without noise carries no finite guarantee"]}
    elif steps == 0:
        spend = accountant.PrivacySpend(epsilon=0.0, delta=config.delta)
        log = {"q": L / n, "sigma": config.noise_multiplier, "steps": 0,
               "delta": config.delta, "caveats": ["no mechanism invocations"]}
    else:
        spend, log = accountant.spend_for_training(
            q=L / n, sigma=config.noise_multiplier, steps=steps,
            delta=config.delta)
    return TrainedModel(params=params, spend=spend, training_trace=trace,
                        steps_taken=steps, mechanism="dp-sgd",
                        accounting_log=log)
