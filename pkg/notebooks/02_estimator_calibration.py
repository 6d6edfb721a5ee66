# # Comparing uncertainty estimators on a toy molecule
#
# A water-like molecule is distorted at random and labelled with a simple
# bond-stretch energy. We featurize it with the Coulomb matrix, tune a GPR,
# then compare three uncertainty estimators on the held-out pool:
# the GPR predictive std, the two-set difference and a bootstrap ensemble.

# %%
import numpy as np

from gpruq.calibration import calibration_curve, displayed, extended_reliability, make_records
from gpruq.dataio import SplitSpec, split, toy_trajectory
from gpruq.gpr import HyperInitGrid, optimize_hyperparameters, select_initial_guess
from gpruq.representations import coulomb_features
from gpruq.uncertainty import ESTIMATORS, build_estimator

# %%
ds = toy_trajectory(1500, seed=0)
x = coulomb_features(ds.structures)
y = ds.energies
train, test, pool = split(ds, SplitSpec(n_train=300, n_test=600, seed=0))
print("feature dimension:", x.shape[1], "| train/test/pool:", len(train), len(test), len(pool))

# %% [markdown]
# Hyperparameters: a small cross-validated grid picks the starting point,
# then ADAM maximizes the marginal likelihood on the full training set.
# Fewer optimizer steps and repeats than the defaults keep this quick.

# %%
init = select_initial_guess(x[train], y[train], HyperInitGrid(), n_folds=5, n_repeats=1,
                            n_steps=50)
hyper = optimize_hyperparameters(x[train], y[train], init.params, init.noise)
print("lengthscales:", np.round(hyper.params.lengthscales, 3))
print(f"noise variance: {hyper.noise:.3g}  log marginal likelihood: {hyper.mll:.2f}")

# %% [markdown]
# All estimators share the same predictive mean (the full GPR); they differ
# only in the uncertainty they attach to it.

# %%
for kind in ESTIMATORS:
    est = build_estimator(kind, x[train], y[train], hyper.params, hyper.noise, seed=0)
    pred = est.predict(x[pool])
    records = make_records(pred, y[pool])
    curve = calibration_curve(records)
    bins = displayed(extended_reliability(records, np.median(pred.std) / 5, min_count=20))
    mae = np.mean(np.abs(pred.mean - y[pool]))
    print(f"\n{kind}: MAE {mae:.4f} eV, median u {np.median(pred.std):.4f} eV, "
          f"miscalibration area {curve.miscalibration_area:.3f}")
    for b in bins[:6]:
        print(f"  u~{b.center:.4f}  n={b.count:4d}  err mean {b.error_mean:+.4f}  "
              f"err std {b.error_std:.4f}")
