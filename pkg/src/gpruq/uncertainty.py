"""Predictive distributions from three uncertainty estimators.

All estimators report the mean of the GPR model trained on the full training
set. They differ only in the standard deviation:

``gpr_std``
    the GPR predictive standard deviation (observation noise not added);
``two_set``
    the absolute difference of two GPR models trained on disjoint halves;
``bootstrap``
    the sample standard deviation over models trained on bootstrap resamples.

Hyperparameters are shared by every member model and never re-optimized.
"""

from dataclasses import dataclass

import numpy as np

from .gpr import FeatureSet, GPRModel, KernelParams, fit


@dataclass(frozen=True)
class PredictiveDistribution:
    """Mean and uncertainty (standard deviation) of a batch of predictions."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        std = np.atleast_1d(np.asarray(self.std, dtype=float))
        if mean.shape != std.shape:
            raise ValueError("mean and std shapes differ")
        if np.any(std < 0) or not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ValueError("std must be finite and >= 0, mean finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def __len__(self):
        return len(self.mean)


def gpr_predict(model: GPRModel, x) -> PredictiveDistribution:
    mean, std = model.predict(x, return_std=True)
    return PredictiveDistribution(mean, std)


def _data(inputs, targets):
    x = FeatureSet.from_any(inputs)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(x) != len(y):
        raise ValueError("inputs and targets differ in length")
    return x, y


@dataclass(frozen=True)
class GPREstimator:
    full_model: GPRModel
    seed: int = 0

    name = "gpr_std"

    @classmethod
    def fit(cls, inputs, targets, params: KernelParams, noise: float, seed=0, **_):
        x, y = _data(inputs, targets)
        return cls(fit(x, y, params, noise), seed)

    def predict(self, x) -> PredictiveDistribution:
        return gpr_predict(self.full_model, x)

    def predict_mean(self, x):
        return self.full_model.predict(x)

    def refit(self, inputs, targets, seed=None):
        m = self.full_model
        return type(self).fit(inputs, targets, m.params, m.noise, self.seed if seed is None else seed)


@dataclass(frozen=True)
class TwoSetEstimator:
    """Full model plus two models on a random disjoint halving of the data."""

    full_model: GPRModel
    half_a: GPRModel
    half_b: GPRModel
    split_seed: int
    index_a: np.ndarray
    index_b: np.ndarray

    name = "two_set"

    @classmethod
    def fit(cls, inputs, targets, params: KernelParams, noise: float, seed=0, **_):
        x, y = _data(inputs, targets)
        if len(x) < 2:
            raise ValueError("two-set estimator needs at least 2 training samples")
        perm = np.random.default_rng(seed).permutation(len(x))
        ia, ib = perm[:len(x) // 2], perm[len(x) // 2:]
        return cls(fit(x, y, params, noise),
                   fit(x.subset(ia), y[ia], params, noise),
                   fit(x.subset(ib), y[ib], params, noise),
                   seed, ia, ib)

    def predict(self, x) -> PredictiveDistribution:
        return two_set_predict(self, x)

    def predict_mean(self, x):
        return self.full_model.predict(x)

    def refit(self, inputs, targets, seed=None):
        m = self.full_model
        return type(self).fit(inputs, targets, m.params, m.noise,
                              self.split_seed if seed is None else seed)


def two_set_predict(e: TwoSetEstimator, x) -> PredictiveDistribution:
    mean = e.full_model.predict(x)
    return PredictiveDistribution(mean, np.abs(e.half_a.predict(x) - e.half_b.predict(x)))


@dataclass(frozen=True)
class BootstrapEstimator:
    """Full model plus an ensemble trained on resamples with replacement.

    With zero noise variance the duplicate indices of a resample are dropped
    before fitting, since repeated rows would make the kernel matrix singular.
    """

    full_model: GPRModel
    members: tuple
    resample_seed: int
    resamples: tuple

    name = "bootstrap"

    @property
    def n_members(self) -> int:
        return len(self.members)

    @classmethod
    def fit(cls, inputs, targets, params: KernelParams, noise: float, seed=0, n_members=10, **_):
        if n_members < 2:
            raise ValueError("bootstrap ensemble needs at least 2 members")
        x, y = _data(inputs, targets)
        rng = np.random.default_rng(seed)
        members, resamples = [], []
        for _ in range(n_members):
            idx = rng.integers(0, len(x), size=len(x))
            if noise == 0:
                idx = np.unique(idx)
            resamples.append(idx)
            members.append(fit(x.subset(idx), y[idx], params, noise))
        return cls(fit(x, y, params, noise), tuple(members), seed, tuple(resamples))

    def predict(self, x) -> PredictiveDistribution:
        return bootstrap_predict(self, x)

    def predict_mean(self, x):
        return self.full_model.predict(x)

    def refit(self, inputs, targets, seed=None):
        m = self.full_model
        return type(self).fit(inputs, targets, m.params, m.noise,
                              self.resample_seed if seed is None else seed,
                              n_members=self.n_members)


def bootstrap_predict(e: BootstrapEstimator, x) -> PredictiveDistribution:
    preds = np.stack([m.predict(x) for m in e.members])
    return PredictiveDistribution(e.full_model.predict(x), np.std(preds, axis=0, ddof=1))


ESTIMATORS = {cls.name: cls for cls in (GPREstimator, TwoSetEstimator, BootstrapEstimator)}


def build_estimator(kind: str, inputs, targets, params: KernelParams, noise: float,
                    seed=0, n_members=10):
    """Construct an estimator by name (``gpr_std``, ``two_set`` or ``bootstrap``)."""
    try:
        cls = ESTIMATORS[kind]
    except KeyError:
        raise ValueError(f"unknown estimator {kind!r}; choose from {sorted(ESTIMATORS)}") from None
    return cls.fit(inputs, targets, params, noise, seed=seed, n_members=n_members)


def refit(estimator, inputs, targets, seed=None):
    """Retrain an estimator on a new training set with unchanged hyperparameters."""
    return estimator.refit(inputs, targets, seed=seed)
