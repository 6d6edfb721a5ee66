"""Standard normal distribution helpers.

The quantile function uses Acklam's rational approximation followed by a
single Halley refinement step against ``erfc``, which brings the absolute
error down to a few ulp over the whole open unit interval.
"""

import math

import numpy as np

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)

_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _acklam(p: float) -> float:
    # lower half only; callers reflect p > 0.5
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def _ppf_scalar(p: float) -> float:
    if math.isnan(p) or p < 0.0 or p > 1.0:
        return math.nan
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return math.inf
    if p > 0.5:
        # 1 - p is exact here; refining in the lower tail avoids cancellation near 1
        return -_ppf_scalar(1.0 - p)
    x = _acklam(p)
    # one Halley step
    e = 0.5 * math.erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def norm_ppf(p):
    """Inverse CDF of the standard normal distribution.

    Parameters
    ----------
    p : float or array_like
        Probabilities in [0, 1]. The endpoints map to -inf and +inf,
        values outside the interval to NaN.

    Returns
    -------
    float or ndarray
        Quantiles with the same shape as ``p``.
    """
    arr = np.asarray(p, dtype=float)
    out = np.array([_ppf_scalar(float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def norm_cdf(x):
    x = np.asarray(x, dtype=float)
    out = 0.5 * np.vectorize(math.erfc, otypes=[float])(-x / _SQRT2)
    return float(out) if out.ndim == 0 else out


def norm_pdf(x, scale=1.0):
    x = np.asarray(x, dtype=float) / scale
    return np.exp(-0.5 * x * x) / (_SQRT2PI * scale)


def central_z(alpha):
    """Half-width, in standard deviations, of the central interval with mass ``alpha``."""
    return norm_ppf(0.5 * (1.0 + np.asarray(alpha, dtype=float)))
