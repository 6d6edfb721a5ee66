"""Pool-based uncertainty sampling with random and oracle baselines.

One sample is labelled per iteration; hyperparameters stay fixed for the whole
run. Labels of pool samples are held by :class:`GuardedPool`, which hands a
label out only once the sample has been acquired. The ``oracle_max_error``
baseline is the only strategy allowed to look at labels before selection.
"""

import csv
from dataclasses import asdict, dataclass, field
import json
import logging
import math

import numpy as np

from .gpr import FeatureSet, KernelParams, extend
from .uncertainty import ESTIMATORS, GPREstimator

logger = logging.getLogger(__name__)

STRATEGIES = ("gpr_std", "two_set", "bootstrap", "random", "oracle_max_error")
_UNCERTAINTY_STRATEGIES = ("gpr_std", "two_set", "bootstrap")


class LabelAccessError(RuntimeError):
    """A label of an unacquired pool sample was requested."""


@dataclass(frozen=True)
class ALConfig:
    n_init: int = 200
    n_iter: int = 100
    strategy: str = "gpr_std"
    seed: int = 0
    refit_ensembles: bool = True
    n_members: int = 10
    incremental: bool = False

    def __post_init__(self):
        if self.n_init < 1 or self.n_iter < 0:
            raise ValueError("need n_init >= 1 and n_iter >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")


@dataclass(frozen=True)
class ModelSpec:
    """Fixed hyperparameters used for every (re)fit during a run."""

    params: KernelParams
    noise: float


class GuardedPool:
    """Candidate pool that releases labels only for acquired samples.

    Parameters
    ----------
    features : FeatureSet or array-like
        Inputs of all candidates.
    labels : array-like
        Labels of all candidates; kept private.
    ids : array-like, optional
        Dataset indices of the candidates (defaults to ``0..n-1``).
    """

    def __init__(self, features, labels, ids=None):
        self.features = FeatureSet.from_any(features)
        self._labels = np.asarray(labels, dtype=float).reshape(-1)
        if len(self._labels) != len(self.features):
            raise ValueError("features and labels differ in length")
        self.ids = np.arange(len(self._labels)) if ids is None else np.asarray(ids, dtype=int)
        self._available = np.ones(len(self._labels), dtype=bool)
        self.access_log = []

    def __len__(self):
        return int(self._available.sum())

    @property
    def available(self) -> np.ndarray:
        """Positions of the samples still in the pool, ascending."""
        return np.flatnonzero(self._available)

    @property
    def acquired(self) -> np.ndarray:
        return np.flatnonzero(~self._available)

    def acquire(self, pos) -> float:
        pos = int(pos)
        if not self._available[pos]:
            raise LabelAccessError(f"pool position {pos} already acquired")
        self._available[pos] = False
        self.access_log.append(("acquire", pos))
        return float(self._labels[pos])

    def label(self, pos) -> float:
        if self._available[int(pos)]:
            raise LabelAccessError(f"label of unacquired pool position {pos} requested")
        return float(self._labels[int(pos)])

    def peek(self, positions) -> np.ndarray:
        """Labels of pool samples before acquisition (oracle baseline only)."""
        positions = np.asarray(positions, dtype=int)
        self.access_log.append(("peek", tuple(positions.tolist())))
        return self._labels[positions].copy()


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    selected_index: int
    mae: float
    max_abs_error: float
    abs_error_variance: float
    n_train: int
    pool_size: int


@dataclass
class ALTrace:
    config: ALConfig
    rows: list = field(default_factory=list)
    truncated: bool = False

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def mae(self):
        return self.column("mae")

    @property
    def selected(self):
        return [r.selected_index for r in self.rows[1:]]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "selected_index", "mae", "max_abs_error",
                        "abs_error_variance"])
            for r in self.rows:
                w.writerow([r.iteration, r.selected_index, repr(r.mae), repr(r.max_abs_error),
                            repr(r.abs_error_variance)])


def write_manifest(path, config: ALConfig, spec: ModelSpec, extra=None):
    data = {
        "config": asdict(config),
        "hyperparameters": {
            "output_scale": spec.params.output_scale,
            "lengthscales": spec.params.lengthscales.tolist(),
            "noise": spec.noise,
        },
    }
    data.update(extra or {})
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)


def evaluate_metrics(predictions, truths):
    """(MAE, max absolute error, Bessel-corrected variance of absolute errors)."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(truths, dtype=float).reshape(-1)
    if len(p) != len(t) or len(p) == 0:
        raise ValueError("need equal, non-zero lengths")
    a = np.abs(t - p)
    var = float(a.var(ddof=1)) if len(a) > 1 else 0.0
    return float(a.mean()), float(a.max()), var


def argmax_selection(scores, pool_indices):
    """Pool index with the highest finite score; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    pool_indices = np.asarray(pool_indices).reshape(-1)
    if len(scores) == 0 or len(scores) != len(pool_indices):
        raise ValueError("need non-empty scores matching pool indices")
    ok = ~np.isnan(scores)
    if not ok.any():
        raise ValueError("all scores are NaN")
    best = np.max(scores[ok])
    return pool_indices[ok & (scores == best)].min()


def _iteration_seed(seed, iteration):
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def run_uncertainty_sampling(pool: GuardedPool, test_features, test_truths, cfg: ALConfig,
                             spec: ModelSpec, test_ids=None) -> ALTrace:
    """Run uncertainty sampling (or a baseline) and log test metrics per iteration.

    Row 0 of the returned trace holds the metrics of the initial model trained
    on ``cfg.n_init`` random pool samples. If the pool runs dry before
    ``cfg.n_iter`` iterations the trace is cut short and flagged ``truncated``.
    """
    test_x = FeatureSet.from_any(test_features)
    test_y = np.asarray(test_truths, dtype=float)
    test_ids = None if test_ids is None else set(np.asarray(test_ids).tolist())
    if test_ids is not None and not test_ids.isdisjoint(pool.ids.tolist()):
        raise ValueError("pool and test set overlap")
    if cfg.n_init > len(pool):
        raise ValueError(f"n_init={cfg.n_init} exceeds pool size {len(pool)}")

    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    pick_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    train_pos = [int(p) for p in init_rng.choice(pool.available, size=cfg.n_init, replace=False)]
    train_y = [pool.acquire(p) for p in train_pos]

    kind = cfg.strategy if cfg.strategy in _UNCERTAINTY_STRATEGIES else "gpr_std"
    estimator_cls = ESTIMATORS[kind]
    use_extend = cfg.incremental and estimator_cls is GPREstimator

    def build(iteration):
        x = pool.features.subset(train_pos)
        seed = _iteration_seed(cfg.seed, iteration) if cfg.refit_ensembles else cfg.seed
        return estimator_cls.fit(x, np.array(train_y), spec.params, spec.noise, seed=seed,
                                 n_members=cfg.n_members)

    est = build(0)
    trace = ALTrace(cfg)

    def record(iteration, selected):
        if test_ids is not None:
            assert test_ids.isdisjoint(pool.ids[train_pos].tolist()), "test sample in training set"
        assert len(train_pos) == len(set(train_pos)), "sample selected twice"
        metrics = evaluate_metrics(est.predict_mean(test_x), test_y)
        trace.rows.append(TraceRow(iteration, selected, *metrics, len(train_pos), len(pool)))

    record(0, -1)
    for it in range(1, cfg.n_iter + 1):
        cand = pool.available
        if len(cand) == 0:
            logger.info("pool exhausted after %d iterations", it - 1)
            trace.truncated = True
            break
        cand_x = pool.features.subset(cand)
        if cfg.strategy in _UNCERTAINTY_STRATEGIES:
            scores = est.predict(cand_x).std
        elif cfg.strategy == "random":
            scores = np.zeros(len(cand))
            scores[pick_rng.integers(len(cand))] = 1.0
        else:
            scores = np.abs(pool.peek(cand) - est.predict_mean(cand_x))
        chosen = int(argmax_selection(scores, cand))
        n_before = len(pool)
        train_y.append(pool.acquire(chosen))
        train_pos.append(chosen)
        assert len(pool) == n_before - 1
        if use_extend:
            est = GPREstimator(extend(est.full_model, pool.features.subset([chosen]), train_y[-1]),
                               est.seed)
        else:
            est = build(it)
        record(it, int(pool.ids[chosen]))
    return trace


def run_strategies(strategies, pool_features, pool_labels, test_features, test_truths,
                   spec: ModelSpec, base: ALConfig = ALConfig(), pool_ids=None, test_ids=None):
    """Run several strategies on the same pool, test set and seeds."""
    out = {}
    for s in strategies:
        cfg = ALConfig(**{**asdict(base), "strategy": s})
        pool = GuardedPool(pool_features, pool_labels, pool_ids)
        out[s] = run_uncertainty_sampling(pool, test_features, test_truths, cfg, spec, test_ids)
    return out


def sine_benchmark(seed, n_pool=200, n_test=500, noise_std=0.05):
    """1-D sine pool/test data for quick strategy comparisons."""
    rng = np.random.default_rng(seed)
    x_pool = rng.uniform(0, 2 * math.pi, size=(n_pool, 1))
    x_test = rng.uniform(0, 2 * math.pi, size=(n_test, 1))
    y_pool = np.sin(x_pool[:, 0]) + noise_std * rng.standard_normal(n_pool)
    y_test = np.sin(x_test[:, 0])
    return x_pool, y_pool, x_test, y_test

