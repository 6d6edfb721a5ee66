# # Self-calibration on a synthetic sine
#
# If test targets are drawn from the very Gaussians a GPR predicts, the
# model is calibrated by construction. This script builds that situation,
# then checks that the calibration diagnostics agree.
#
# Run with `python3 notebooks/01_sine_self_calibration.py`.

# %%
import numpy as np

from gpruq.calibration import calibration_curve, check_self_calibration, displayed, make_records
from gpruq.selfcheck import auto_bin_width, sine_fixture

# %% [markdown]
# 30 noisy training points from sin(x) on [0, 2pi]. Hyperparameters come from
# maximizing the marginal likelihood. The 2,000 test targets are then sampled
# from the predictive distribution of the fitted model.

# %%
fx = sine_fixture(n_train=30, n_test=2000, noise_std=0.1, seed=0)
print("fitted hyperparameters:", fx.model.params, "noise variance:", f"{fx.model.noise:.3g}")
print("uncertainty range:", fx.uncertainty.min().round(4), "-", fx.uncertainty.max().round(4))

# %% [markdown]
# Pair each prediction with its target and compute the calibration curve.
# For a calibrated model the observed coverage of every central interval
# matches its nominal level, so the miscalibration area should be small.

# %%
records = make_records(list(zip(fx.mean, fx.uncertainty)), fx.y_test)
curve = calibration_curve(records)
for a in (0.1, 0.5, 0.9):
    k = int(round(a * 100))
    print(f"alpha={a:.1f}  observed={curve.alpha_observed[k]:.3f}")
print(f"miscalibration area: {curve.miscalibration_area:.4f}")

# %% [markdown]
# The extended reliability diagram bins predictions by their uncertainty.
# Inside each bin the errors should have mean ~0 and std ~ the bin centre.
# Bins with fewer than 50 records are suppressed.

# %%
report = check_self_calibration(records, auto_bin_width(fx.uncertainty))
print(report.table())
print("self-calibration", "PASS" if report.passed else "FAIL")

# %% [markdown]
# Halving the reported uncertainty makes the model overconfident. Both the
# curve and the per-bin std check notice.

# %%
shrunk = make_records(list(zip(fx.mean, 0.5 * fx.uncertainty)), fx.y_test)
bad = check_self_calibration(shrunk, auto_bin_width(0.5 * fx.uncertainty))
print(f"overconfident area: {bad.miscalibration_area:.4f}, passed: {bad.passed}")
print("bins flagged:", len(bad.failures), "of", len(displayed(bad.bins)))

# %%
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(1, 2, figsize=(9, 4))
    ax[0].plot(curve.alpha_predicted, curve.alpha_observed, label="model")
    ax[0].plot([0, 1], [0, 1], "k--", lw=0.8)
    ax[0].set_xlabel("predicted coverage")
    ax[0].set_ylabel("observed coverage")
    bins = displayed(report.bins)
    ax[1].plot([b.center for b in bins], [b.error_std for b in bins], "o", label="error std")
    ax[1].plot([b.center for b in bins], [b.center for b in bins], "k--", lw=0.8)
    ax[1].set_xlabel("uncertainty")
    fig.tight_layout()
    fig.savefig("sine_self_calibration.png", dpi=120)
    print("wrote sine_self_calibration.png")
