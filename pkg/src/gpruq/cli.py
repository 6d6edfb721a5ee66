"""Command-line workbench: ``gpruq {featurize,tune,calibrate,al,synthcheck}``.

Options may also come from a flat ``key = value`` file given with
``--config``; flags on the command line override it. Every command writes a
``manifest.json`` into ``--out`` holding the resolved options, seeds, input
checksums and library versions.

Exit codes: 0 success, 1 failed verdict or fit, 2 usage or configuration error.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .active import STRATEGIES, ALConfig, ModelSpec, run_strategies, write_manifest
from .calibration import (BIN_WIDTH_PRESETS, DEFAULT_MIN_COUNT, calibration_curve,
                          extended_reliability, make_records, write_reliability_csv)
from .dataio import (ENERGY_UNITS, SplitSpec, parse_xyz_trajectory, read_hyper_file,
                     read_key_values, split, write_hyper_file)
from .exceptions import ConditioningError, ConfigurationError, ParseError
from .gpr import FeatureSet, HyperInitGrid, optimize_hyperparameters, select_initial_guess
from .representations import SoapConfig, coulomb_features, soap_feature_sets
from .selfcheck import auto_bin_width, run_synthcheck
from .uncertainty import ESTIMATORS, build_estimator

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VERDICT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid or inconsistent options."""


# ---------------------------------------------------------------------------
# option handling
# ---------------------------------------------------------------------------

def _float_list(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _bin_width(text):
    key = str(text).strip().lower()
    if key in BIN_WIDTH_PRESETS:
        return BIN_WIDTH_PRESETS[key]
    try:
        value = float(key)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bin width must be a number or one of {sorted(BIN_WIDTH_PRESETS)}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("bin width must be > 0")
    return value


def _bool(text):
    key = str(text).strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# dest -> (flags, kwargs, default); defaults are applied after the config merge
_COMMON = {
    "out": (("--out",), {"help": "output directory"}, "gpruq-out"),
    "seed": (("--seed",), {"type": int}, 0),
}
_DATA = {
    "dataset": (("--dataset",), {"help": "multi-frame XYZ trajectory"}, None),
    "unit": (("--unit",), {"type": str.lower, "choices": sorted(ENERGY_UNITS)}, "ev"),
    "repr": (("--repr",), {"choices": ("coulomb", "soap")}, "coulomb"),
    "r_cut": (("--r-cut",), {"type": float}, 5.0),
    "n_max": (("--n-max",), {"type": int}, 3),
    "l_max": (("--l-max",), {"type": int}, 1),
    "sigma_atom": (("--sigma-atom",), {"type": float}, 1.0),
}
_SPLIT = {
    "n_train": (("--n-train",), {"type": int}, 1000),
    "n_test": (("--n-test",), {"type": int}, 2000),
}
_HYPER = {
    "hyper": (("--hyper",), {"help": "hyperparameter file written by 'tune'"}, None),
}
_TUNE = {
    "cv_folds": (("--cv-folds",), {"type": int}, 5),
    "cv_repeats": (("--cv-repeats",), {"type": int}, 5),
    "steps": (("--steps",), {"type": int}, 200),
    "lengthscale_inits": (("--lengthscale-inits",), {"type": _float_list},
                          HyperInitGrid().lengthscale_inits),
    "output_scale_inits": (("--output-scale-inits",), {"type": _float_list},
                           HyperInitGrid().output_scale_inits),
    "noise_inits": (("--noise-inits",), {"type": _float_list}, HyperInitGrid().noise_inits),
}
_CALIB = {
    "estimator": (("--estimator",), {"action": "append", "choices": sorted(ESTIMATORS)},
                  ["gpr_std"]),
    "bin_width": (("--bin-width",), {"type": _bin_width,
                                     "help": "bin width in eV or a preset molecule name"}, None),
    "min_count": (("--min-count",), {"type": int}, DEFAULT_MIN_COUNT),
    "n_members": (("--n-members",), {"type": int}, 10),
    "svg": (("--svg",), {"action": "store_const", "const": True}, False),
}
_AL = {
    "strategy": (("--strategy",), {"action": "append", "choices": STRATEGIES},
                 list(STRATEGIES)),
    "n_init": (("--n-init",), {"type": int}, 200),
    "n_iter": (("--n-iter",), {"type": int}, 100),
    "n_members": _CALIB["n_members"],
    "incremental": (("--incremental",), {"action": "store_const", "const": True}, False),
}
_SYNTH = {
    "n_train": (("--n-train",), {"type": int}, 30),
    "n_test": (("--n-test",), {"type": int}, 2000),
    "noise_std": (("--noise-std",), {"type": float}, 0.1),
    "no_noise": (("--no-noise",), {"action": "store_const", "const": True,
                                   "help": "draw latent targets without observation noise"},
                 False),
    "bin_width": _CALIB["bin_width"],
    "min_count": _CALIB["min_count"],
}

COMMANDS = {
    "featurize": ({**_COMMON, **_DATA}, "dump features to CSV"),
    "tune": ({**_COMMON, **_DATA, **_SPLIT, **_TUNE}, "select and optimize hyperparameters"),
    "calibrate": ({**_COMMON, **_DATA, **_SPLIT, **_HYPER, **_CALIB},
                  "calibration curve and reliability diagram on the pool"),
    "al": ({**_COMMON, **_DATA, **_SPLIT, **_HYPER, **_AL}, "active-learning traces"),
    "synthcheck": ({**_COMMON, **_SYNTH}, "self-calibration check on a synthetic fixture"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="gpruq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gpruq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (options, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("-v", "--verbose", action="store_true")
        for dest, (flags, kwargs, _) in options.items():
            p.add_argument(*flags, dest=dest, default=None, **kwargs)
    return parser


def _convert(dest, flags, kwargs, raw):
    action = kwargs.get("action")
    conv = kwargs.get("type", str)
    try:
        if action == "store_const":
            return _bool(raw)
        if action == "append":
            values = [v.strip() for v in raw.split(",") if v.strip()]
        else:
            values = [conv(raw)]
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"config key {dest!r}: {exc}") from None
    choices = kwargs.get("choices")
    if choices is not None and any(v not in choices for v in values):
        raise UsageError(f"config key {dest!r}: choose from {list(choices)}")
    return values if action == "append" else values[0]


def resolve_options(args) -> dict:
    """Merge defaults < config file < command-line flags."""
    options = COMMANDS[args.command][0]
    given = {d: getattr(args, d) for d in options if getattr(args, d) is not None}
    from_file = {}
    if args.config:
        try:
            kv = read_key_values(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        for key, raw in kv.items():
            if key not in options:
                raise UsageError(f"unknown config key {key!r} for '{args.command}'")
            from_file[key] = _convert(key, *options[key][:2], raw)
    out = {d: spec[2] for d, spec in options.items()}
    out.update(from_file)
    out.update(given)
    for key in ("estimator", "strategy"):
        if key in out:
            out[key] = list(dict.fromkeys(out[key]))
    return out


# ---------------------------------------------------------------------------
# shared steps
# ---------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    return {"gpruq": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _manifest(command, opts, extra=None):
    inputs = {}
    for key in ("dataset", "hyper"):
        if opts.get(key):
            inputs[key] = {"path": os.path.abspath(opts[key]), "sha256": _sha256(opts[key])}
    data = {
        "command": command,
        "options": {k: _jsonable(v) for k, v in opts.items()},
        "seeds": {"seed": opts.get("seed")},
        "inputs": inputs,
        "versions": _versions(),
    }
    data.update(extra or {})
    return data


def _out_dir(opts):
    os.makedirs(opts["out"], exist_ok=True)
    return opts["out"]


def _load_dataset(opts):
    if not opts.get("dataset"):
        raise UsageError("--dataset is required")
    if not os.path.isfile(opts["dataset"]):
        raise UsageError(f"dataset not found: {opts['dataset']}")
    ds = parse_xyz_trajectory(opts["dataset"], unit=opts["unit"])
    if len(ds) == 0:
        raise UsageError("dataset holds no frames")
    return ds


def _soap_config(ds, opts):
    return SoapConfig.for_structures(ds.structures[:1], r_cut=opts["r_cut"],
                                     n_max=opts["n_max"], l_max=opts["l_max"],
                                     sigma_atom=opts["sigma_atom"])


def featurize_dataset(ds, opts) -> FeatureSet:
    if opts["repr"] == "coulomb":
        return FeatureSet.from_any(coulomb_features(ds.structures))
    return FeatureSet.from_any(soap_feature_sets(ds.structures, _soap_config(ds, opts)),
                               atomistic=True)


def _split(ds, opts):
    return split(ds, SplitSpec(opts["n_train"], opts["n_test"], opts["seed"]))


def _load_hyper(opts, dim):
    if not opts.get("hyper"):
        raise UsageError("--hyper is required (run 'tune' first)")
    if not os.path.isfile(opts["hyper"]):
        raise UsageError(f"hyperparameter file not found: {opts['hyper']}")
    params, noise, _ = read_hyper_file(opts["hyper"])
    if params.dim != dim:
        raise UsageError(f"hyperparameter file has {params.dim} lengthscales, "
                         f"features have {dim} dimensions")
    return params, noise


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_featurize(opts):
    ds = _load_dataset(opts)
    feats = featurize_dataset(ds, opts)
    out = _out_dir(opts)
    path = os.path.join(out, "features.csv")
    owners = feats.owners
    starts = feats.offsets if feats.is_atomistic else np.arange(len(feats) + 1)
    atom_index = np.arange(len(owners)) - starts[owners]
    energies = ds.energies
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["structure_index", "atom_index", "energy"]
                   + [f"f{j}" for j in range(feats.dim)])
        for row, (s, a) in enumerate(zip(owners, atom_index)):
            w.writerow([int(s), int(a), repr(float(energies[s]))]
                       + [repr(float(v)) for v in feats.atoms[row]])
    _write_json(os.path.join(out, "manifest.json"),
                _manifest("featurize", opts, {"n_structures": len(ds), "n_features": feats.dim}))
    print(f"wrote {len(ds)} structures x {feats.dim} features to {path}")
    return EXIT_OK


def cmd_tune(opts):
    ds = _load_dataset(opts)
    train, _, _ = _split(ds, opts)
    x = featurize_dataset(ds, opts).subset(train)
    y = ds.energies[train]
    grid = HyperInitGrid(opts["lengthscale_inits"], opts["output_scale_inits"],
                         opts["noise_inits"])
    out = _out_dir(opts)
    try:
        init = select_initial_guess(x, y, grid, n_folds=opts["cv_folds"],
                                    n_repeats=opts["cv_repeats"], seed=opts["seed"],
                                    n_steps=opts["steps"])
    except ConditioningError as exc:
        print(f"tune failed: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    for combo, loss in init.losses.items():
        status = "failed" if loss == np.inf else f"{loss:.6g}"
        print(f"init lengthscale={combo[0]:.6g} output_scale={combo[1]:.6g} "
              f"noise={combo[2]:.3g}: cv loss {status}")
    res = optimize_hyperparameters(x, y, init.params, init.noise, n_steps=opts["steps"])
    path = os.path.join(out, "hyper.txt")
    write_hyper_file(path, res.params, res.noise, {"mll": repr(res.mll)})
    losses = [{"lengthscale": c[0], "output_scale": c[1], "noise": c[2], "cv_loss": v}
              for c, v in init.losses.items()]
    _write_json(os.path.join(out, "manifest.json"),
                _manifest("tune", opts, {"train_indices": train.tolist(), "cv_losses": losses,
                                         "aborted": res.aborted}))
    print(f"MLL {res.mll:.6g}; wrote {path}")
    return EXIT_OK


def _plot(path, curve, bins, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.plot([0, 1], [0, 1], "k--", lw=1)
    ax1.plot(curve.alpha_predicted, curve.alpha_observed)
    ax1.set_xlabel("predicted coverage")
    ax1.set_ylabel("observed coverage")
    ax1.set_title(f"area {curve.miscalibration_area:.3f}")
    shown = [b for b in bins if not b.suppressed]
    centers = np.array([b.center for b in shown])
    if len(shown):
        ax2.plot(centers, centers, "k--", lw=1, label="ideal std")
        ax2.axhline(0.0, color="k", lw=0.5)
        ax2.plot(centers, [b.error_std for b in shown], "o-", label="error std")
        ax2.plot(centers, [b.error_mean for b in shown], "s-", label="error mean")
        ax2.legend()
    ax2.set_xlabel("uncertainty")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_calibrate(opts):
    ds = _load_dataset(opts)
    train, _, pool = _split(ds, opts)
    if len(pool) == 0:
        raise UsageError("candidate pool is empty; reduce --n-train or --n-test")
    feats = featurize_dataset(ds, opts)
    params, noise = _load_hyper(opts, feats.dim)
    if opts["min_count"] < 2:
        raise UsageError("--min-count must be >= 2")
    y = ds.energies
    x_pool = feats.subset(pool)
    out = _out_dir(opts)
    summary, widths = [], {}
    for kind in opts["estimator"]:
        est = build_estimator(kind, feats.subset(train), y[train], params, noise,
                              seed=opts["seed"], n_members=opts["n_members"])
        dist = est.predict(x_pool)
        records = make_records(dist, y[pool])
        delta_u = opts["bin_width"] or auto_bin_width(dist.std)
        widths[kind] = delta_u
        curve = calibration_curve(records)
        bins = extended_reliability(records, delta_u, opts["min_count"])
        curve.to_csv(os.path.join(out, f"calibration_curve_{kind}.csv"))
        write_reliability_csv(bins, os.path.join(out, f"reliability_{kind}.csv"))
        mae = float(np.mean(np.abs(dist.mean - y[pool])))
        summary.append((kind, curve.miscalibration_area, delta_u, mae))
        if opts["svg"]:
            try:
                _plot(os.path.join(out, f"calibration_{kind}.svg"), curve, bins, kind)
            except ImportError:
                raise UsageError("--svg needs matplotlib (pip install 'artifact[plot]')") from None
        print(f"{kind}: miscalibration area {curve.miscalibration_area:.4f}, "
              f"bin width {delta_u:.4g}, pool MAE {mae:.4g}")
    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "miscalibration_area", "bin_width", "mae"])
        for row in summary:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    _write_json(os.path.join(out, "manifest.json"),
                _manifest("calibrate", opts, {"bin_widths": widths, "n_train": len(train),
                                              "n_pool": len(pool)}))
    return EXIT_OK


def cmd_al(opts):
    ds = _load_dataset(opts)
    train, test, pool = _split(ds, opts)
    candidates = np.sort(np.concatenate([train, pool]))
    feats = featurize_dataset(ds, opts)
    params, noise = _load_hyper(opts, feats.dim)
    spec = ModelSpec(params, noise)
    y = ds.energies
    base = ALConfig(n_init=opts["n_init"], n_iter=opts["n_iter"], seed=opts["seed"],
                    n_members=opts["n_members"], incremental=opts["incremental"])
    traces = run_strategies(opts["strategy"], feats.subset(candidates), y[candidates],
                            feats.subset(test), y[test], spec, base,
                            pool_ids=candidates, test_ids=test)
    out = _out_dir(opts)
    truncated = {}
    for name, trace in traces.items():
        trace.to_csv(os.path.join(out, f"trace_{name}.csv"))
        truncated[name] = trace.truncated
        print(f"{name}: final MAE {trace.mae[-1]:.4g} after {len(trace) - 1} iterations")
    write_manifest(os.path.join(out, "al_manifest.json"), base, spec,
                   {"strategies": opts["strategy"], "truncated": truncated})
    _write_json(os.path.join(out, "manifest.json"),
                _manifest("al", opts, {"n_candidates": len(candidates), "n_test": len(test),
                                       "truncated": truncated}))
    return EXIT_OK


def cmd_synthcheck(opts):
    if opts["min_count"] < 2:
        raise UsageError("--min-count must be >= 2")
    report = run_synthcheck(n_train=opts["n_train"], n_test=opts["n_test"],
                            noise_std=opts["noise_std"], seed=opts["seed"],
                            include_noise=not opts["no_noise"], delta_u=opts["bin_width"],
                            min_count=opts["min_count"])
    text = report.table()
    print(text)
    out = _out_dir(opts)
    with open(os.path.join(out, "synthcheck.txt"), "w") as fh:
        fh.write(text + "\n")
    _write_json(os.path.join(out, "manifest.json"),
                _manifest("synthcheck", opts, {"passed": report.passed,
                                               "miscalibration_area": report.miscalibration_area,
                                               "failed_bins": report.failures}))
    return EXIT_OK if report.passed else EXIT_VERDICT


_HANDLERS = {
    "featurize": cmd_featurize,
    "tune": cmd_tune,
    "calibrate": cmd_calibrate,
    "al": cmd_al,
    "synthcheck": cmd_synthcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        opts = resolve_options(args)
        return _HANDLERS[args.command](opts)
    except (UsageError, ConfigurationError, ParseError, ValueError, OSError) as exc:
        print(f"gpruq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConditioningError as exc:
        print(f"gpruq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
