import csv
import hashlib
import json

import numpy as np
import pytest

from gpruq.cli import main
from gpruq.dataio import (SplitSpec, parse_xyz_trajectory, read_hyper_file, split,
                          toy_trajectory, write_hyper_file, write_xyz_trajectory)
from gpruq.gpr import KernelParams, optimize_hyperparameters
from gpruq.representations import coulomb_features

SPLIT = ["--n-train", "60", "--n-test", "80"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.xyz"
    write_xyz_trajectory(toy_trajectory(200, seed=3), path)
    return path


@pytest.fixture(scope="module")
def hyper(tmp_path_factory):
    path = tmp_path_factory.mktemp("hyper") / "hyper.txt"
    write_hyper_file(path, KernelParams(5.0, [3.0] * 6), 1e-3)
    return path


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_featurize_coulomb(dataset, tmp_path):
    assert main(["featurize", "--dataset", str(dataset), "--out", str(tmp_path)]) == 0
    data = rows(tmp_path / "features.csv")
    assert len(data) == 200
    ds = parse_xyz_trajectory(dataset)
    feats = np.array([[float(r[f"f{j}"]) for j in range(6)] for r in data])
    np.testing.assert_array_equal(feats, coulomb_features(ds.structures))
    assert json.load(open(tmp_path / "manifest.json"))["command"] == "featurize"


def test_featurize_soap(dataset, tmp_path):
    assert main(["featurize", "--dataset", str(dataset), "--repr", "soap",
                 "--out", str(tmp_path)]) == 0
    data = rows(tmp_path / "features.csv")
    assert len(data) == 600
    assert [int(r["atom_index"]) for r in data[:3]] == [0, 1, 2]
    assert len([k for k in data[0] if k.startswith("f")]) == 36


def test_tune_singleton_grid_matches_direct(dataset, tmp_path):
    args = ["tune", "--dataset", str(dataset), *SPLIT, "--steps", "20",
            "--lengthscale-inits", "4.0", "--noise-inits", "1e-3", "--out", str(tmp_path)]
    assert main(args) == 0
    params, noise, rest = read_hyper_file(tmp_path / "hyper.txt")
    ds = parse_xyz_trajectory(dataset)
    train, _, _ = split(ds, SplitSpec(60, 80, 0))
    x = coulomb_features(ds.structures)[train]
    direct = optimize_hyperparameters(x, ds.energies[train], KernelParams(1.0, [4.0] * 6),
                                      1e-3, n_steps=20)
    assert params == direct.params and noise == direct.noise
    assert float(rest["mll"]) == direct.mll


def test_tune_rerun_identical(dataset, tmp_path):
    args = ["tune", "--dataset", str(dataset), *SPLIT, "--steps", "5", "--cv-repeats", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert digest(tmp_path / "a" / "hyper.txt") == digest(tmp_path / "b" / "hyper.txt")
    manifest = json.load(open(tmp_path / "a" / "manifest.json"))
    assert len(manifest["cv_losses"]) == 9


def test_tune_output_feeds_calibrate(dataset, tmp_path):
    assert main(["tune", "--dataset", str(dataset), *SPLIT, "--steps", "5", "--cv-repeats", "1",
                 "--out", str(tmp_path / "t")]) == 0
    assert main(["calibrate", "--dataset", str(dataset), *SPLIT,
                 "--hyper", str(tmp_path / "t" / "hyper.txt"), "--out", str(tmp_path / "c")]) == 0


def test_calibrate_outputs(dataset, hyper, tmp_path):
    before = digest(dataset), digest(hyper)
    args = ["calibrate", "--dataset", str(dataset), *SPLIT, "--hyper", str(hyper),
            "--estimator", "gpr_std", "--estimator", "bootstrap", "--n-members", "4",
            "--bin-width", "aspirin", "--min-count", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (digest(dataset), digest(hyper)) == before
    for kind in ("gpr_std", "bootstrap"):
        rel = rows(tmp_path / "a" / f"reliability_{kind}.csv")
        assert sum(int(r["count"]) for r in rel) == 60
        assert float(rel[0]["center"]) == pytest.approx(0.0075)
        for name in (f"reliability_{kind}.csv", f"calibration_curve_{kind}.csv"):
            assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)
        assert len(rows(tmp_path / "a" / f"calibration_curve_{kind}.csv")) == 101
    summary = rows(tmp_path / "a" / "summary.csv")
    assert [r["estimator"] for r in summary] == ["gpr_std", "bootstrap"]
    manifest = json.load(open(tmp_path / "a" / "manifest.json"))
    assert manifest["n_pool"] == 60 and manifest["inputs"]["dataset"]["sha256"] == before[0]
    assert set(manifest["versions"]) == {"gpruq", "numpy", "scipy", "python"}


def test_calibrate_svg(dataset, hyper, tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["calibrate", "--dataset", str(dataset), *SPLIT, "--hyper", str(hyper),
                 "--svg", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "calibration_gpr_std.svg").read_text().lstrip().startswith("<?xml")


def test_calibrate_empty_pool(dataset, hyper, tmp_path):
    assert main(["calibrate", "--dataset", str(dataset), "--n-train", "100", "--n-test", "100",
                 "--hyper", str(hyper), "--out", str(tmp_path)]) == 2


def test_calibrate_dimension_mismatch(dataset, tmp_path):
    bad = tmp_path / "bad.txt"
    write_hyper_file(bad, KernelParams(1.0, [1.0, 1.0]), 1e-3)
    assert main(["calibrate", "--dataset", str(dataset), *SPLIT, "--hyper", str(bad),
                 "--out", str(tmp_path)]) == 2


def test_al_random_trace(dataset, hyper, tmp_path):
    args = ["al", "--dataset", str(dataset), *SPLIT, "--hyper", str(hyper),
            "--strategy", "random", "--n-init", "20", "--n-iter", "10"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    trace = rows(tmp_path / "a" / "trace_random.csv")
    assert len(trace) == 11
    assert digest(tmp_path / "a" / "trace_random.csv") == digest(tmp_path / "b" / "trace_random.csv")
    assert not (tmp_path / "a" / "trace_gpr_std.csv").exists()
    test_ids = set(split(200, SplitSpec(60, 80, 0))[1].tolist())
    assert all(int(r["selected_index"]) not in test_ids for r in trace[1:])


def test_al_all_strategies(dataset, hyper, tmp_path):
    assert main(["al", "--dataset", str(dataset), *SPLIT, "--hyper", str(hyper),
                 "--n-init", "20", "--n-iter", "3", "--n-members", "3",
                 "--out", str(tmp_path)]) == 0
    for s in ("gpr_std", "two_set", "bootstrap", "random", "oracle_max_error"):
        assert len(rows(tmp_path / f"trace_{s}.csv")) == 4
    assert json.load(open(tmp_path / "al_manifest.json"))["config"]["n_init"] == 20


def test_config_file_and_override(dataset, hyper, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"dataset = {dataset}\nhyper = {hyper}\nn-train = 60\nn_test = 80\n"
                   "strategy = random, gpr_std\nn_init = 20\nn_iter = 4\n")
    assert main(["al", "--config", str(cfg), "--n-iter", "2", "--out", str(tmp_path / "o")]) == 0
    assert len(rows(tmp_path / "o" / "trace_random.csv")) == 3
    assert len(rows(tmp_path / "o" / "trace_gpr_std.csv")) == 3
    opts = json.load(open(tmp_path / "o" / "manifest.json"))["options"]
    assert opts["n_iter"] == 2 and opts["strategy"] == ["random", "gpr_std"]


def test_config_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["synthcheck", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text("seed = many\n")
    assert main(["synthcheck", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["synthcheck", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_synthcheck_pass_and_fail(tmp_path, capsys):
    assert main(["synthcheck", "--out", str(tmp_path / "a")]) == 0
    assert "PASS" in capsys.readouterr().out
    assert json.load(open(tmp_path / "a" / "manifest.json"))["passed"] is True
    # no bin reaches the display threshold, so nothing can be verified
    assert main(["synthcheck", "--min-count", "5000", "--out", str(tmp_path / "b")]) == 1


@pytest.mark.parametrize("argv", [[], ["bogus"], ["synthcheck", "--seed", "x"],
                                  ["calibrate", "--bin-width", "-1"],
                                  ["calibrate", "--bin-width", "caffeine"],
                                  ["al", "--strategy", "entropy"]])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_missing_required_inputs(dataset, tmp_path):
    assert main(["featurize", "--out", str(tmp_path)]) == 2
    assert main(["calibrate", "--dataset", str(dataset), "--out", str(tmp_path)]) == 2
    assert main(["featurize", "--dataset", str(tmp_path / "none.xyz")]) == 2


def test_malformed_dataset(tmp_path):
    bad = tmp_path / "bad.xyz"
    bad.write_text("2\nenergy=1\nH 0 0 0\n")
    assert main(["featurize", "--dataset", str(bad), "--out", str(tmp_path)]) == 2
