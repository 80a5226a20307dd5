"""Synthetic data generation for the two learning phases.

Phase 1 (representation learning): T tasks drawn from N(0, task_cov), each
with n1 samples; features N(0, feature_cov); labels y = x.beta + noise.
Phase 2 (few-shot): a single fresh task with n2 samples.

A master seed derives named substreams (tasks / features / noise /
few-shot), so e.g. changing T never perturbs the few-shot draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import CovarianceModel, ValidationError, sample_gaussian
from .rng import substream

__all__ = ["ProblemSpec", "MetaTrainSet", "FewShotSet", "gen_meta_train", "gen_few_shot"]


@dataclass(frozen=True)
class ProblemSpec:
    """Feature/task distributions plus the label-noise level."""

    feature_cov: CovarianceModel
    task_cov: CovarianceModel
    noise_sd: float

    def __post_init__(self) -> None:
        if self.feature_cov.dim != self.task_cov.dim:
            raise ValidationError("feature and task covariances disagree on dimension")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")

    @property
    def d(self) -> int:
        return self.feature_cov.dim


@dataclass(frozen=True)
class MetaTrainSet:
    """Phase-1 data: tasks (T, d), features (T, n1, d), labels (T, n1)."""

    tasks: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    @property
    def T(self) -> int:
        return self.tasks.shape[0]

    @property
    def n1(self) -> int:
        return self.features.shape[1]

    @property
    def N(self) -> int:
        return self.T * self.n1

    @property
    def d(self) -> int:
        return self.tasks.shape[1]


@dataclass(frozen=True)
class FewShotSet:
    """Phase-2 data: one task, n2 labeled samples."""

    beta_star: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    @property
    def n2(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def gen_meta_train(spec: ProblemSpec, T: int, n1: int, seed: int) -> MetaTrainSet:
    if T < 1 or n1 < 1:
        raise ValidationError("need T >= 1 and n1 >= 1")
    tasks = sample_gaussian(spec.task_cov, T, substream(seed, "tasks"))
    feats = sample_gaussian(spec.feature_cov, T * n1, substream(seed, "features"))
    feats = feats.reshape(T, n1, spec.d)
    noise = spec.noise_sd * substream(seed, "noise").standard_normal((T, n1))
    labels = np.einsum("tnd,td->tn", feats, tasks) + noise
    return MetaTrainSet(tasks=tasks, features=feats, labels=labels)


def gen_few_shot(spec: ProblemSpec, n2: int, seed: int) -> FewShotSet:
    if n2 < 1:
        raise ValidationError("need n2 >= 1")
    beta = sample_gaussian(spec.task_cov, 1, substream(seed, "fewshot-task"))[0]
    feats = sample_gaussian(spec.feature_cov, n2, substream(seed, "fewshot-features"))
    noise = spec.noise_sd * substream(seed, "fewshot-noise").standard_normal(n2)
    labels = feats @ beta + noise
    return FewShotSet(beta_star=beta, features=feats, labels=labels)
