"""Exact Gaussian process regression with an ARD squared-exponential kernel.

Inputs are either global feature vectors (one row per structure) or atomistic
feature sets (one row per atom). Both are carried by :class:`FeatureSet`; a
global input is simply a structure with a single "atom", so one kernel code
path serves both cases. For atomistic inputs the structure-level covariance is
the plain double sum of atom-pair kernels.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .exceptions import ConditioningError

logger = logging.getLogger(__name__)

_CHUNK_ELEMENTS = 4_000_000
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4
_STD_CLAMP = 1e-10


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelParams:
    """ARD kernel hyperparameters.

    Attributes
    ----------
    output_scale : float
        Signal variance sigma_f**2.
    lengthscales : ndarray, shape (D,)
        One length-scale per feature dimension.
    """

    output_scale: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "output_scale", float(self.output_scale))
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("need a 1-D, non-empty lengthscale vector")
        if not (self.output_scale > 0 and np.all(ls > 0)):
            raise ValueError("output_scale and lengthscales must be strictly positive")
        if not (np.isfinite(self.output_scale) and np.all(np.isfinite(ls))):
            raise ValueError("hyperparameters must be finite")

    @classmethod
    def isotropic(cls, output_scale: float, lengthscale: float, dim: int) -> "KernelParams":
        return cls(output_scale, np.full(dim, float(lengthscale)))

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def __eq__(self, other):
        if not isinstance(other, KernelParams):
            return NotImplemented
        return (self.output_scale == other.output_scale
                and np.array_equal(self.lengthscales, other.lengthscales))

    __hash__ = None


class FeatureSet:
    """A batch of model inputs.

    Parameters
    ----------
    atoms : ndarray, shape (n_rows, D)
        Feature rows. For global inputs there is one row per sample.
    offsets : ndarray, shape (n_samples + 1,), optional
        Row offsets delimiting the atoms of each sample. ``None`` marks a
        global (one row per sample) batch.
    """

    def __init__(self, atoms, offsets=None):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim != 2:
            raise ValueError(f"feature rows must be 2-D, got shape {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("features must be finite")
        self.atoms = atoms
        if offsets is not None:
            offsets = np.asarray(offsets, dtype=int)
            counts = np.diff(offsets)
            if offsets[0] != 0 or offsets[-1] != len(atoms) or np.any(counts < 1):
                raise ValueError("every atomistic sample needs at least one atom")
        self.offsets = offsets

    @classmethod
    def from_any(cls, x, atomistic=None) -> "FeatureSet":
        """Build from a 2-D array (global), 3-D array or list of 2-D arrays (atomistic)."""
        if isinstance(x, FeatureSet):
            return x
        if isinstance(x, np.ndarray) and x.ndim == 3:
            n, a, d = x.shape
            return cls(x.reshape(n * a, d), np.arange(n + 1) * a)
        if isinstance(x, (list, tuple)) and len(x) and np.ndim(x[0]) == 2:
            sets = [np.asarray(s, dtype=float) for s in x]
            counts = [len(s) for s in sets]
            if any(c < 1 for c in counts):
                raise ValueError("empty atom set")
            return cls(np.vstack(sets), np.concatenate([[0], np.cumsum(counts)]))
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if atomistic:
            return cls(arr, np.array([0, len(arr)]))
        return cls(arr)

    @property
    def is_atomistic(self) -> bool:
        return self.offsets is not None

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return len(self.atoms) if self.offsets is None else len(self.offsets) - 1

    @property
    def owners(self) -> np.ndarray:
        if self.offsets is None:
            return np.arange(len(self.atoms))
        return np.repeat(np.arange(len(self)), np.diff(self.offsets))

    def sample(self, i) -> np.ndarray:
        if self.offsets is None:
            return self.atoms[i:i + 1]
        return self.atoms[self.offsets[i]:self.offsets[i + 1]]

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=int).reshape(-1)
        if self.offsets is None:
            return FeatureSet(self.atoms[idx])
        parts = [self.sample(i) for i in idx]
        counts = [len(p) for p in parts]
        atoms = np.vstack(parts) if parts else np.empty((0, self.dim))
        return FeatureSet(atoms, np.concatenate([[0], np.cumsum(counts)]).astype(int))

    def concat(self, other: "FeatureSet") -> "FeatureSet":
        if self.is_atomistic != other.is_atomistic:
            raise ValueError("cannot mix global and atomistic inputs")
        atoms = np.vstack([self.atoms, other.atoms])
        if self.offsets is None:
            return FeatureSet(atoms)
        return FeatureSet(atoms, np.concatenate([self.offsets, other.offsets[1:] + self.offsets[-1]]))


def _as_query(x, model_inputs: FeatureSet) -> FeatureSet:
    if isinstance(x, FeatureSet):
        q = x
    elif model_inputs.is_atomistic and isinstance(x, np.ndarray) and x.ndim == 2:
        q = FeatureSet.from_any(x, atomistic=True)
    else:
        q = FeatureSet.from_any(x)
    if q.is_atomistic != model_inputs.is_atomistic:
        raise ValueError("query and training inputs differ in kind (global vs atomistic)")
    if q.dim != model_inputs.dim:
        raise ValueError(f"feature dimension mismatch: {q.dim} != {model_inputs.dim}")
    return q


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def kernel_eval(x, x2, p: KernelParams) -> float:
    """Squared-exponential ARD covariance between two feature vectors."""
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if not (len(x) == len(x2) == p.dim):
        raise ValueError(f"dimension mismatch: {len(x)}, {len(x2)}, {p.dim}")
    r = (x - x2) / p.lengthscales
    return p.output_scale * math.exp(-0.5 * float(r @ r))


def atomistic_kernel_eval(xs, xs2, p: KernelParams) -> float:
    """Sum of atom-pair kernels between two atomistic feature sets."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    xs2 = np.atleast_2d(np.asarray(xs2, dtype=float))
    if xs.size == 0 or xs2.size == 0:
        raise ValueError("empty atom set")
    if xs.shape[1] != p.dim or xs2.shape[1] != p.dim:
        raise ValueError("dimension mismatch")
    return float(_atom_kernel(xs, xs2, p).sum())


def _atom_kernel(a, b, p: KernelParams) -> np.ndarray:
    d2 = cdist(a / p.lengthscales, b / p.lengthscales, "sqeuclidean")
    return p.output_scale * np.exp(-0.5 * d2)


def _row_chunks(a: FeatureSet, n_cols: int):
    """Yield (sample_slice, row_slice) pairs with bounded chunk memory."""
    n = len(a)
    rows_per = max(1, _CHUNK_ELEMENTS // max(n_cols, 1))
    if a.offsets is None:
        for s in range(0, n, rows_per):
            e = min(n, s + rows_per)
            yield slice(s, e), slice(s, e)
        return
    s = 0
    while s < n:
        e = s + 1
        while e < n and a.offsets[e + 1] - a.offsets[s] <= rows_per:
            e += 1
        yield slice(s, e), slice(a.offsets[s], a.offsets[e])
        s = e


def _reduce_rows(m, offsets):
    if offsets is None:
        return m
    return np.add.reduceat(m, offsets[:-1] - offsets[0], axis=0)


def kernel_matrix(a, b, p: KernelParams) -> np.ndarray:
    """Structure-level covariance matrix between two input batches."""
    a = FeatureSet.from_any(a)
    b = FeatureSet.from_any(b)
    if a.dim != p.dim or b.dim != p.dim:
        raise ValueError("feature dimension does not match lengthscales")
    out = np.empty((len(a), len(b)))
    for samples, rows in _row_chunks(a, len(b.atoms)):
        ka = _atom_kernel(a.atoms[rows], b.atoms, p)
        if a.offsets is not None:
            ka = _reduce_rows(ka, a.offsets[samples.start:samples.stop + 1])
        if b.offsets is not None:
            ka = np.add.reduceat(ka, b.offsets[:-1], axis=1)
        out[samples] = ka
    return out


def kernel_diag(a, p: KernelParams) -> np.ndarray:
    """Prior variances k(x, x) of every sample."""
    a = FeatureSet.from_any(a)
    if a.offsets is None:
        return np.full(len(a), p.output_scale)
    return np.array([_atom_kernel(a.sample(i), a.sample(i), p).sum() for i in range(len(a))])


# ---------------------------------------------------------------------------
# fitting and prediction
# ---------------------------------------------------------------------------

def cholesky_with_jitter(k: np.ndarray):
    """Lower Cholesky factor, escalating diagonal jitter on failure.

    Returns ``(chol, jitter)`` where ``jitter`` is the absolute amount added to
    the diagonal (0 when the plain matrix factorized).
    """
    try:
        return cholesky(k, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    scale = float(np.mean(np.diag(k)))
    rel = _JITTER_START
    while rel <= _JITTER_MAX * (1 + 1e-9):
        jitter = rel * scale
        try:
            chol = cholesky(k + jitter * np.eye(len(k)), lower=True, check_finite=False)
            logger.debug("cholesky needed jitter %.3g", jitter)
            return chol, jitter
        except LinAlgError:
            rel *= 10.0
    raise ConditioningError(
        f"kernel matrix not positive definite even with jitter {rel / 10 * scale:.3g}",
        jitter=rel / 10 * scale)


@dataclass(frozen=True)
class GPRModel:
    """Trained exact GPR state. Immutable once built by :func:`fit`."""

    inputs: FeatureSet
    y_mean: float
    y_centered: np.ndarray
    noise: float
    params: KernelParams
    chol: np.ndarray
    weights: np.ndarray
    jitter: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_train(self) -> int:
        return len(self.y_centered)

    @property
    def targets(self) -> np.ndarray:
        return self.y_centered + self.y_mean

    def predict_mean(self, x) -> np.ndarray:
        return predict_mean(self, x)

    def predict_std(self, x) -> np.ndarray:
        return predict_std(self, x)

    def predict(self, x, return_std=False):
        q = _as_query(x, self.inputs)
        kx = kernel_matrix(q, self.inputs, self.params)
        mean = kx @ self.weights + self.y_mean
        if not return_std:
            return mean
        return mean, _std_from_cross(self, q, kx)


def fit(inputs, targets, params: KernelParams, noise: float) -> GPRModel:
    """Factorize K(X, X) + noise * I and solve for the weight vector.

    Targets are centered by their mean; the mean is added back at prediction.
    """
    x = FeatureSet.from_any(inputs)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(x) < 1 or len(x) != len(y):
        raise ValueError(f"need >= 1 sample and matching lengths, got {len(x)} and {len(y)}")
    if noise < 0:
        raise ValueError("noise variance must be >= 0")
    if x.dim != params.dim:
        raise ValueError(f"feature dimension {x.dim} != number of lengthscales {params.dim}")
    k = kernel_matrix(x, x, params)
    k[np.diag_indices_from(k)] += noise
    chol, jitter = cholesky_with_jitter(k)
    y_mean = float(np.mean(y))
    yc = y - y_mean
    weights = cho_solve((chol, True), yc, check_finite=False)
    return GPRModel(x, y_mean, yc, float(noise), params, chol, weights, jitter)


def extend(model: GPRModel, x_new, y_new: float) -> GPRModel:
    """Add one training sample by appending a row to the Cholesky factor.

    Equivalent to refitting on the enlarged set (same jitter); falls back to a
    full refit if the update loses positive definiteness.
    """
    q = _as_query(x_new, model.inputs)
    if len(q) != 1:
        raise ValueError("extend adds exactly one sample")
    inputs = model.inputs.concat(q)
    y = np.append(model.targets, float(y_new))
    kvec = kernel_matrix(model.inputs, q, model.params)[:, 0]
    knn = kernel_diag(q, model.params)[0] + model.noise + model.jitter
    row = solve_triangular(model.chol, kvec, lower=True, check_finite=False)
    d2 = knn - row @ row
    if not d2 > 0:
        return fit(inputs, y, model.params, model.noise)
    n = model.n_train
    chol = np.zeros((n + 1, n + 1))
    chol[:n, :n] = model.chol
    chol[n, :n] = row
    chol[n, n] = math.sqrt(d2)
    y_mean = float(np.mean(y))
    yc = y - y_mean
    weights = cho_solve((chol, True), yc, check_finite=False)
    return GPRModel(inputs, y_mean, yc, model.noise, model.params, chol, weights, model.jitter)


def predict_mean(model: GPRModel, x) -> np.ndarray:
    """Predictive mean K(x, X) alpha + training mean."""
    return model.predict(x)


def _std_from_cross(model, q, kx):
    v = solve_triangular(model.chol, kx.T, lower=True, check_finite=False)
    prior = kernel_diag(q, model.params)
    rad = prior - np.einsum("ij,ij->j", v, v)
    neg = rad < 0
    if np.any(rad[neg] < -_STD_CLAMP * prior[neg]):
        worst = float(np.min(rad / prior))
        raise ConditioningError(f"negative predictive variance (relative {worst:.3g})")
    rad[neg] = 0.0
    return np.sqrt(rad)


def predict_std(model: GPRModel, x) -> np.ndarray:
    """Predictive standard deviation of the latent function (noise not added)."""
    return model.predict(x, return_std=True)[1]


# ---------------------------------------------------------------------------
# marginal likelihood
# ---------------------------------------------------------------------------

def pack_log_params(params: KernelParams, noise: float) -> np.ndarray:
    """Log-parameter vector ``[log sigma_f^2, log l_1 .. log l_D, log sigma_n^2]``."""
    return np.concatenate([[math.log(params.output_scale)], np.log(params.lengthscales),
                           [math.log(noise)]])


def unpack_log_params(theta):
    theta = np.asarray(theta, dtype=float)
    return KernelParams(math.exp(theta[0]), np.exp(theta[1:-1])), math.exp(theta[-1])


def _grad_contractions(x: FeatureSet, w: np.ndarray, p: KernelParams):
    """Half of sum_ij W_ij dK_ij/dtheta for the output scale and each log lengthscale."""
    atoms = x.atoms - x.atoms.mean(axis=0)
    owners = x.owners
    g_scale = 0.0
    g_len = np.zeros(p.dim)
    n_atoms = len(atoms)
    rows_per = max(1, _CHUNK_ELEMENTS // n_atoms)
    sq = atoms ** 2
    for s in range(0, n_atoms, rows_per):
        e = min(n_atoms, s + rows_per)
        ka = _atom_kernel(atoms[s:e], atoms, p)
        a = w[np.ix_(owners[s:e], owners)] * ka
        g_scale += a.sum()
        g_len += sq[s:e].T @ a.sum(axis=1) + a.sum(axis=0) @ sq \
            - 2.0 * np.einsum("rd,rd->d", atoms[s:e], a @ atoms)
    return 0.5 * g_scale, 0.5 * g_len / p.lengthscales ** 2


def log_marginal_likelihood(inputs, targets, params: KernelParams, noise: float,
                            eval_gradient=False):
    """Log marginal likelihood of the centered targets.

    With ``eval_gradient`` the gradient with respect to the log-parameter
    vector of :func:`pack_log_params` is returned as well.
    """
    model = fit(inputs, targets, params, noise)
    n = model.n_train
    value = (-0.5 * float(model.y_centered @ model.weights)
             - float(np.sum(np.log(np.diag(model.chol))))
             - 0.5 * n * math.log(2.0 * math.pi))
    if not eval_gradient:
        return value
    k_inv = cho_solve((model.chol, True), np.eye(n), check_finite=False)
    w = np.outer(model.weights, model.weights) - k_inv
    g_scale, g_len = _grad_contractions(model.inputs, w, params)
    g_noise = 0.5 * noise * float(np.trace(w))
    return value, np.concatenate([[g_scale], g_len, [g_noise]])


# ---------------------------------------------------------------------------
# hyperparameter optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperResult:
    params: KernelParams
    noise: float
    mll: float
    history: tuple = ()
    aborted: bool = False


def optimize_hyperparameters(inputs, targets, params: KernelParams, noise: float,
                             n_steps=200, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8):
    """Maximize the log marginal likelihood with ADAM in log-parameter space.

    Runs exactly ``n_steps`` updates unless a non-finite value or gradient is
    met, in which case the best parameters seen so far are returned with
    ``aborted=True``.

    Returns
    -------
    HyperResult
    """
    if noise <= 0:
        raise ValueError("noise must be > 0 to optimize in log space")
    x = FeatureSet.from_any(inputs)
    theta = pack_log_params(params, noise)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history = []
    best = (-math.inf, theta.copy())
    for t in range(1, n_steps + 1):
        try:
            value, grad = log_marginal_likelihood(x, targets, *unpack_log_params(theta),
                                                  eval_gradient=True)
        except (ConditioningError, ValueError, FloatingPointError) as exc:
            logger.warning("MLL evaluation failed at step %d: %s", t, exc)
            value, grad = math.nan, None
        if not (np.isfinite(value) and grad is not None and np.all(np.isfinite(grad))):
            logger.warning("non-finite MLL or gradient at step %d; returning best so far", t)
            if best[0] == -math.inf:
                raise ConditioningError("MLL not finite at the initial parameters")
            p, nz = unpack_log_params(best[1])
            return HyperResult(p, nz, best[0], tuple(history), aborted=True)
        history.append(value)
        if value > best[0]:
            best = (value, theta.copy())
        # ascent on the MLL
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad ** 2
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta + lr * m_hat / (np.sqrt(v_hat) + eps)
    p, nz = unpack_log_params(theta)
    try:
        final = log_marginal_likelihood(x, targets, p, nz)
    except (ConditioningError, ValueError):
        final = math.nan
    if not np.isfinite(final):
        if best[0] == -math.inf:
            raise ConditioningError("MLL not finite at the final parameters")
        p, nz = unpack_log_params(best[1])
        return HyperResult(p, nz, best[0], tuple(history), aborted=True)
    history.append(final)
    return HyperResult(p, nz, final, tuple(history))


# ---------------------------------------------------------------------------
# initial-guess selection by cross validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperInitGrid:
    """Candidate starting values for the MLL maximization."""

    lengthscale_inits: tuple = (2.0, 10 ** 0.75, 10 ** 1.5)
    output_scale_inits: tuple = (1.0,)
    noise_inits: tuple = (1e-4, 1e-6, 1e-8)

    def combinations(self):
        return [(l, s, nz) for l in self.lengthscale_inits
                for s in self.output_scale_inits for nz in self.noise_inits]


@dataclass(frozen=True)
class InitSelection:
    params: KernelParams
    noise: float
    losses: dict


def negative_log_predictive_density(model: GPRModel, x, y) -> float:
    """Mean NLPD of observed targets under N(mean, std**2 + noise)."""
    mean, std = model.predict(x, return_std=True)
    var = std ** 2 + model.noise
    y = np.asarray(y, dtype=float)
    return float(np.mean(0.5 * np.log(2 * np.pi * var) + 0.5 * (y - mean) ** 2 / var))


def kfold_indices(n, n_folds, rng):
    perm = rng.permutation(n)
    return np.array_split(perm, n_folds)


def select_initial_guess(inputs, targets, grid: HyperInitGrid | None = None,
                         n_folds=5, n_repeats=5, seed=0, n_steps=200):
    """Pick the grid combination with the lowest held-out loss.

    Each combination is optimized on the training part of every fold of
    ``n_repeats`` shuffled ``n_folds``-fold splits (identical splits for all
    combinations) and scored by the mean negative log predictive density on
    the held-out part. A failed fold makes the combination's loss infinite.
    The length-scale initial value is shared by all feature dimensions.
    """
    grid = grid or HyperInitGrid()
    x = FeatureSet.from_any(inputs)
    y = np.asarray(targets, dtype=float)
    combos = grid.combinations()
    if len(combos) == 1:
        l0, s0, n0 = combos[0]
        return InitSelection(KernelParams.isotropic(s0, l0, x.dim), n0, {combos[0]: math.nan})
    if len(x) < 10:
        raise ValueError("cross validation needs at least 10 samples")
    rng = np.random.default_rng(seed)
    totals = {c: 0.0 for c in combos}
    count = 0
    for _ in range(n_repeats):
        folds = kfold_indices(len(x), n_folds, rng)
        for k, held in enumerate(folds):
            train = np.concatenate([f for j, f in enumerate(folds) if j != k])
            xt, yt = x.subset(train), y[train]
            xv, yv = x.subset(held), y[held]
            for c in combos:
                if not np.isfinite(totals[c]):
                    continue
                l0, s0, n0 = c
                try:
                    res = optimize_hyperparameters(
                        xt, yt, KernelParams.isotropic(s0, l0, x.dim), n0, n_steps=n_steps)
                    loss = negative_log_predictive_density(
                        fit(xt, yt, res.params, res.noise), xv, yv)
                except (ConditioningError, ValueError, FloatingPointError) as exc:
                    logger.info("combination %s failed: %s", c, exc)
                    loss = math.inf
                totals[c] += loss if np.isfinite(loss) else math.inf
            count += 1
    losses = {c: totals[c] / count for c in combos}
    best = min(combos, key=lambda c: (losses[c], combos.index(c)))
    if not np.isfinite(losses[best]):
        raise ConditioningError("every initial-guess combination failed")
    l0, s0, n0 = best
    return InitSelection(KernelParams.isotropic(s0, l0, x.dim), n0, losses)
