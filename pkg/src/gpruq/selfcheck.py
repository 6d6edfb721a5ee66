"""Synthetic self-calibration fixture.

A GPR model is trained on noisy sine data and test targets are then drawn from
the model's own predictive distributions, so the model describes the
data-generating process exactly. Its uncertainties must therefore pass the
ideal-calibration contract of :func:`gpruq.calibration.check_self_calibration`.
"""

from dataclasses import dataclass

import numpy as np

from .calibration import SelfCalibrationReport, check_self_calibration, make_records
from .dataio import draw_synthetic_targets, synth_sine
from .gpr import KernelParams, fit, optimize_hyperparameters


@dataclass(frozen=True)
class SineFixture:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    mean: np.ndarray
    uncertainty: np.ndarray
    model: object


def auto_bin_width(uncertainty, bins_per_median=10):
    """Bin width giving about ``bins_per_median`` bins below the median uncertainty."""
    med = float(np.median(uncertainty))
    if med <= 0:
        med = float(np.max(uncertainty)) or 1.0
    return med / bins_per_median


def sine_fixture(n_train=30, n_test=2000, noise_std=0.1, seed=0, include_noise=True,
                 n_steps=200):
    """Build the fixture: train, then draw targets from the predictive distributions.

    With ``include_noise`` the targets are noisy measurements (variance
    ``std**2 + noise``) and the uncertainty under test is the matching
    observation std ``sqrt(std**2 + noise)``; otherwise targets are latent
    function draws and the uncertainty is the plain GPR std.
    """
    x_train, y_train, x_test = synth_sine(n_train, n_test, noise_std, seed)
    init_noise = max(noise_std ** 2, 1e-6)
    hyper = optimize_hyperparameters(x_train, y_train, KernelParams(1.0, [1.0]), init_noise,
                                     n_steps=n_steps)
    model = fit(x_train, y_train, hyper.params, hyper.noise)
    mean, std = model.predict(x_test, return_std=True)
    y_test = draw_synthetic_targets(model, x_test, seed=seed + 1, include_noise=include_noise)
    unc = np.sqrt(std ** 2 + model.noise) if include_noise else std
    return SineFixture(x_train, y_train, x_test, y_test, mean, unc, model)


def run_synthcheck(n_train=30, n_test=2000, noise_std=0.1, seed=0, include_noise=True,
                   delta_u=None, min_count=50) -> SelfCalibrationReport:
    fx = sine_fixture(n_train, n_test, noise_std, seed, include_noise)
    records = make_records(list(zip(fx.mean, fx.uncertainty)), fx.y_test)
    if delta_u is None:
        delta_u = auto_bin_width(fx.uncertainty)
    return check_self_calibration(records, delta_u, min_count=min_count)
