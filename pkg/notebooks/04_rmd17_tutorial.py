# # Integration run on an rMD17 molecule
#
# This tutorial needs an external dataset and does not run in the test
# suite. Download one rMD17 molecule, e.g. `rmd17_aspirin.npz`, and run
#
#     python3 notebooks/04_rmd17_tutorial.py path/to/rmd17_aspirin.npz [bin_width_eV]
#
# An extended XYZ trajectory with per-frame `energy=` works as well.
#
# Two qualitative outcomes are expected:
#
# * the GPR std has a lower miscalibration area than the two-set and
#   bootstrap estimators on most molecules;
# * in the high-uncertainty bins the magnitude of the error mean grows with
#   the bin uncertainty.
#
# Absolute error values depend on split sizes and library details and are
# not expected to match published tables.

# %%
import sys
from pathlib import Path

import numpy as np

from gpruq.calibration import (BIN_WIDTH_PRESETS, calibration_curve, displayed,
                               extended_reliability, make_records)
from gpruq.dataio import Dataset, SplitSpec, parse_xyz_trajectory, split, unit_factor
from gpruq.gpr import optimize_hyperparameters, select_initial_guess
from gpruq.representations import Structure, coulomb_features
from gpruq.uncertainty import ESTIMATORS, build_estimator


def load(path):
    """Read rMD17 ``.npz`` (energies in kcal/mol) or extended XYZ (eV)."""
    path = Path(path)
    if path.suffix == ".npz":
        data = np.load(path)
        z = data["nuclear_charges"]
        energies = data["energies"] * unit_factor("kcal/mol")
        return Dataset([Structure(z, r, float(e)) for r, e in zip(data["coords"], energies)],
                       path.stem)
    return parse_xyz_trajectory(path)


if len(sys.argv) < 2:
    print("usage: python3 notebooks/04_rmd17_tutorial.py DATASET [BIN_WIDTH_EV]")
    print("no dataset given; nothing to do")
    sys.exit(0)

ds = load(sys.argv[1])
width = float(sys.argv[2]) if len(sys.argv) > 2 else BIN_WIDTH_PRESETS.get(
    ds.name.replace("rmd17_", ""), 0.015)
print(f"{ds.name}: {len(ds)} frames, {len(ds.atomic_numbers)} atoms, bin width {width} eV")

# %% [markdown]
# 1,000 training, 2,000 test and the remainder (capped at 20,000) as the
# evaluation pool. The Coulomb matrix keeps the kernel matrix small.

# %%
train, _, pool = split(ds, SplitSpec(1000, 2000, seed=0))
pool = pool[:20_000]
x = coulomb_features(ds[np.concatenate([train, pool])].structures)
x_train, x_pool = x[:len(train)], x[len(train):]
y_train, y_pool = ds.energies[train], ds.energies[pool]

init = select_initial_guess(x_train, y_train, n_repeats=1, n_steps=100)
hyper = optimize_hyperparameters(x_train, y_train, init.params, init.noise)
print(f"noise variance {hyper.noise:.3g}, log marginal likelihood {hyper.mll:.1f}")

# %%
areas = {}
for kind in ESTIMATORS:
    pred = build_estimator(kind, x_train, y_train, hyper.params, hyper.noise, seed=0).predict(x_pool)
    records = make_records(pred, y_pool)
    areas[kind] = calibration_curve(records).miscalibration_area
    bins = displayed(extended_reliability(records, width))
    print(f"\n{kind}: MAE {np.mean(np.abs(pred.mean - y_pool)):.4f} eV, "
          f"miscalibration area {areas[kind]:.3f}")
    for b in bins[-5:]:
        print(f"  u~{b.center:.4f}  n={b.count:5d}  err mean {b.error_mean:+.4f}  "
              f"err std {b.error_std:.4f}")

# %%
best = min(areas, key=areas.get)
print(f"\nlowest miscalibration area: {best}")
