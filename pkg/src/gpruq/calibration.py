"""Global and local calibration of predictive uncertainties.

A perfectly calibrated estimator yields errors ``truth - mean`` distributed as
N(0, uncertainty**2). Two views are provided:

* :func:`calibration_curve` checks coverage of central Gaussian intervals over
  the whole record set;
* :func:`extended_reliability` groups records into equidistant uncertainty
  bins and reports the error mean and standard deviation of every bin, to be
  compared against 0 and the bin centre.
"""

import csv
from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np

from .stats import central_z, norm_cdf, norm_pdf

# bin widths in eV used for the benchmark molecules
BIN_WIDTH_PRESETS = {
    "benzene": 0.001,
    "aspirin": 0.015,
    "sma": 0.020,
    "o-hbdi": 0.100,
    "porphyrin": 0.002,
}

DEFAULT_MIN_COUNT = 50


class EvaluationRecord(NamedTuple):
    mean: float
    uncertainty: float
    truth: float
    error: float


def make_records(distributions, truths) -> list:
    """Pair predictions with ground truth.

    ``distributions`` is either a :class:`~gpruq.uncertainty.PredictiveDistribution`
    or a sequence of ``(mean, std)`` pairs.
    """
    if hasattr(distributions, "mean") and hasattr(distributions, "std"):
        pairs = list(zip(np.asarray(distributions.mean).tolist(),
                         np.asarray(distributions.std).tolist()))
    else:
        pairs = [(float(m), float(s)) for m, s in distributions]
    truths = np.asarray(truths, dtype=float).reshape(-1).tolist()
    if len(pairs) != len(truths):
        raise ValueError(f"length mismatch: {len(pairs)} predictions, {len(truths)} truths")
    out = []
    for (m, u), t in zip(pairs, truths):
        if u < 0:
            raise ValueError("uncertainty must be >= 0")
        out.append(EvaluationRecord(m, u, t, t - m))
    return out


def _columns(records):
    if not records:
        return np.empty(0), np.empty(0)
    arr = np.asarray(records, dtype=float)
    return arr[:, 1], arr[:, 3]


# ---------------------------------------------------------------------------
# calibration curve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationCurve:
    alpha_predicted: np.ndarray
    alpha_observed: np.ndarray
    miscalibration_area: float

    @property
    def points(self):
        return list(zip(self.alpha_predicted.tolist(), self.alpha_observed.tolist()))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha_predicted", "alpha_observed"])
            for a, b in self.points:
                w.writerow([repr(a), repr(b)])


def coverage(uncertainty, error, alpha) -> float:
    """Fraction of errors inside the central ``alpha`` Gaussian interval."""
    if alpha >= 1.0:
        return 1.0
    z = central_z(alpha)
    return float(np.mean(np.abs(error) <= z * uncertainty))


def calibration_curve(records, n_alphas=101) -> CalibrationCurve:
    """Observed vs. predicted coverage on an even alpha grid over [0, 1].

    The miscalibration area is the trapezoidal integral of the absolute gap.
    """
    if n_alphas < 2:
        raise ValueError("n_alphas must be >= 2")
    unc, err = _columns(records)
    if len(unc) == 0:
        raise ValueError("calibration curve needs at least one record")
    alphas = np.linspace(0.0, 1.0, n_alphas)
    observed = np.array([coverage(unc, err, a) for a in alphas])
    gap = np.abs(observed - alphas)
    area = float(np.sum(0.5 * (gap[1:] + gap[:-1]) * np.diff(alphas)))
    return CalibrationCurve(alphas, observed, area)


# ---------------------------------------------------------------------------
# extended reliability diagram
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReliabilityBin:
    """Records whose uncertainty lies in ``[(index-1)*width, index*width)``."""

    index: int
    width: float
    count: int
    error_mean: float
    error_std: float
    suppressed: bool
    members: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def lower(self) -> float:
        return (self.index - 1) * self.width

    @property
    def upper(self) -> float:
        return self.index * self.width

    @property
    def center(self) -> float:
        return (self.index - 0.5) * self.width

    theoretical_mean = 0.0

    @property
    def theoretical_std(self) -> float:
        return self.center


def bin_indices(uncertainty, delta_u) -> np.ndarray:
    """1-based bin index of every uncertainty value."""
    if not delta_u > 0:
        raise ValueError("bin width must be > 0")
    return np.floor(np.asarray(uncertainty, dtype=float) / delta_u).astype(int) + 1


def extended_reliability(records, delta_u: float, min_count=DEFAULT_MIN_COUNT) -> list:
    """Per-bin error statistics for equidistant uncertainty bins.

    Every bin from 1 up to the highest occupied one is returned. Bins holding
    ``min_count`` records or fewer are flagged ``suppressed``; their statistics
    are still computed. ``error_std`` uses the Bessel correction.
    """
    if min_count < 2:
        raise ValueError("min_count must be >= 2")
    unc, err = _columns(records)
    if len(unc) == 0:
        return []
    beta = bin_indices(unc, delta_u)
    bins = []
    for b in range(1, int(beta.max()) + 1):
        members = np.flatnonzero(beta == b)
        e = err[members]
        mean = float(e.mean()) if len(e) else math.nan
        std = float(e.std(ddof=1)) if len(e) > 1 else math.nan
        bins.append(ReliabilityBin(b, float(delta_u), len(e), mean, std,
                                   len(e) <= min_count, members))
    return bins


def displayed(bins) -> list:
    return [b for b in bins if not b.suppressed]


def write_reliability_csv(bins, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_index", "center", "count", "suppressed", "error_mean", "error_std"])
        for b in bins:
            w.writerow([b.index, repr(b.center), b.count, int(b.suppressed),
                        repr(b.error_mean), repr(b.error_std)])


@dataclass(frozen=True)
class BinHistogram:
    edges: np.ndarray
    counts: np.ndarray
    predicted_density: np.ndarray
    predicted_counts: np.ndarray

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def per_bin_error_histogram(records, rbin: ReliabilityBin, n_hist_bins=20) -> BinHistogram:
    """Histogram of the errors in one bin with the predicted N(0, center**2) overlay.

    The support is symmetric about zero and wide enough for both the observed
    errors and four predicted standard deviations.
    """
    _, err = _columns(records)
    if rbin.count == 0:
        empty = np.empty(0)
        return BinHistogram(empty, empty.astype(int), empty, empty)
    if rbin.members is not None:
        e = err[rbin.members]
    else:
        unc, _ = _columns(records)
        e = err[bin_indices(unc, rbin.width) == rbin.index]
    u = rbin.center
    half = max(float(np.max(np.abs(e))), 4.0 * u) * (1 + 1e-12)
    edges = np.linspace(-half, half, n_hist_bins + 1)
    counts, _ = np.histogram(e, bins=edges)
    density = norm_pdf(0.5 * (edges[1:] + edges[:-1]), scale=u)
    predicted = len(e) * np.diff(norm_cdf(edges / u))
    return BinHistogram(edges, counts, density, predicted)


# ---------------------------------------------------------------------------
# self-calibration contract
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelfCalibrationReport:
    passed: bool
    miscalibration_area: float
    bins: list
    failures: list

    def table(self) -> str:
        lines = [f"{'bin':>4} {'center':>10} {'count':>6} {'err_mean':>11} {'err_std':>10}  status"]
        for b in self.bins:
            status = "skip" if b.suppressed else ("FAIL" if b.index in self.failures else "ok")
            lines.append(f"{b.index:>4} {b.center:>10.4g} {b.count:>6} {b.error_mean:>11.4g} "
                         f"{b.error_std:>10.4g}  {status}")
        lines.append(f"miscalibration area: {self.miscalibration_area:.4f}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def check_self_calibration(records, delta_u, min_count=DEFAULT_MIN_COUNT, max_area=0.05,
                           std_rtol=0.15, mean_sigmas=3.0, n_alphas=101):
    """Test records against the ideal-calibration contract.

    Every displayed bin must satisfy ``|error_mean| <= mean_sigmas * u / sqrt(count)``
    and ``|error_std - u| <= std_rtol * u`` with ``u`` the bin centre; the
    calibration curve's miscalibration area must stay below ``max_area``.
    """
    curve = calibration_curve(records, n_alphas)
    bins = extended_reliability(records, delta_u, min_count)
    failures = []
    for b in displayed(bins):
        u = b.center
        if abs(b.error_mean) > mean_sigmas * u / math.sqrt(b.count) or \
                abs(b.error_std - u) > std_rtol * u:
            failures.append(b.index)
    passed = curve.miscalibration_area < max_area and not failures and bool(displayed(bins))
    return SelfCalibrationReport(passed, curve.miscalibration_area, bins, failures)
