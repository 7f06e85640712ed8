import json
import math
import os

import numpy as np
import pytest

from treelets.cli import argv_from_config, main
from treelets.core import TreeletBasis
from treelets.data import DataMatrix, format_csv, load_csv


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def snapshot(directory):
    return {name: read(os.path.join(directory, name)) for name in sorted(os.listdir(directory))}


@pytest.fixture
def pair_csv(tmp_path):
    x = [1.0, -2.0, 0.5, 3.0, -1.5, 2.5]
    path = tmp_path / "pair.csv"
    path.write_text(format_csv(DataMatrix.from_array(np.c_[x, x], ["g1", "g2"])))
    return str(path)


@pytest.fixture
def noise_csv(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "noise.csv"
    path.write_text(format_csv(DataMatrix.from_array(rng.standard_normal((24, 30)))))
    return str(path)


def write_spec(tmp_path, obj, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


BLOCK_SPEC = {"model": "block", "seed": 4, "n": 40, "blocks": [{"size": 3, "rho": 0.8}, {"size": 3, "rho": 0.5}], "noise_sd": 0.1}


# -- fit / transform ----------------------------------------------------------------


def test_fit_perfect_pair(tmp_path, pair_csv):
    out = tmp_path / "fit"
    assert run("fit", "--input", pair_csv, "--output-dir", out) == 0
    assert sorted(os.listdir(out)) == ["basis.json", "dendrogram.json", "dendrogram.nwk"]
    dend = json.loads(read(out / "dendrogram.json"))
    node = dend["nodes"][0]
    assert abs(node["theta"]) == pytest.approx(math.pi / 4, abs=1e-12)
    assert node["var_diff"] == pytest.approx(0.0, abs=1e-12)
    prov = dend["provenance"]
    assert prov["tool"] == "treelets" and len(prov["input_sha256"]) == 64
    assert prov["config"]["metric"] == "covariance"
    assert "threads" not in prov["config"] and "output_dir" not in prov["config"]
    assert read(out / "dendrogram.nwk").decode().rstrip().endswith(";")


def test_fit_level_too_large_is_usage_error(tmp_path, pair_csv):
    assert run("fit", "--input", pair_csv, "--output-dir", tmp_path / "o", "--level", 2) == 2
    assert not (tmp_path / "o").exists() or os.listdir(tmp_path / "o") == []


def test_fit_missing_input(tmp_path):
    assert run("fit", "--input", tmp_path / "none.csv", "--output-dir", tmp_path / "o") == 1


def test_bad_flag_value_exits_two(tmp_path, pair_csv):
    with pytest.raises(SystemExit) as err:
        run("fit", "--input", pair_csv, "--output-dir", tmp_path, "--metric", "cosine")
    assert err.value.code == 2


def test_fit_rerun_is_byte_identical(tmp_path, noise_csv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("fit", "--input", noise_csv, "--output-dir", a, "--retention", "lowindex") == 0
    assert run("fit", "--input", noise_csv, "--output-dir", b, "--retention", "lowindex", "--threads", 4) == 0
    assert snapshot(a) == snapshot(b)


def test_transform_round_trip(tmp_path, noise_csv):
    fit_dir, tr_dir = tmp_path / "fit", tmp_path / "tr"
    assert run("fit", "--input", noise_csv, "--output-dir", fit_dir) == 0
    assert run("transform", "--input", noise_csv, "--basis", fit_dir / "basis.json", "--output-dir", tr_dir) == 0
    coeffs = load_csv(str(tr_dir / "coefficients.csv")).values
    basis = TreeletBasis.from_json(json.loads(read(fit_dir / "basis.json"))).basis
    X = load_csv(noise_csv).values
    np.testing.assert_allclose(coeffs @ basis.T, X, atol=1e-10)


def test_transform_bad_basis(tmp_path, noise_csv):
    bad = tmp_path / "basis.json"
    bad.write_text("{}")
    assert run("transform", "--input", noise_csv, "--basis", bad, "--output-dir", tmp_path / "o") == 1


# -- simulate ------------------------------------------------------------------------


def test_simulate_deterministic(tmp_path):
    spec = write_spec(tmp_path, BLOCK_SPEC)
    assert run("simulate", "--spec", spec, "--output-dir", tmp_path / "a") == 0
    assert run("simulate", "--spec", spec, "--output-dir", tmp_path / "b") == 0
    assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")
    side = json.loads(read(tmp_path / "a" / "labels.json"))
    assert side["labels"] == [0, 0, 0, 1, 1, 1] and side["scale"] == "log"


def test_simulate_seed_flag_overrides_spec(tmp_path):
    spec = write_spec(tmp_path, BLOCK_SPEC)
    run("simulate", "--spec", spec, "--output-dir", tmp_path / "a")
    run("simulate", "--spec", spec, "--output-dir", tmp_path / "b", "--seed", 5)
    assert read(tmp_path / "a" / "data.csv") != read(tmp_path / "b" / "data.csv")


def test_simulate_env_seed_fallback(tmp_path, monkeypatch):
    obj = {k: v for k, v in BLOCK_SPEC.items() if k != "seed"}
    spec = write_spec(tmp_path, obj)
    monkeypatch.delenv("TREELET_SEED", raising=False)
    assert run("simulate", "--spec", spec, "--output-dir", tmp_path / "none") == 1
    monkeypatch.setenv("TREELET_SEED", "4")
    assert run("simulate", "--spec", spec, "--output-dir", tmp_path / "env") == 0
    explicit = write_spec(tmp_path, BLOCK_SPEC, "explicit.json")
    assert run("simulate", "--spec", explicit, "--output-dir", tmp_path / "ref") == 0
    assert read(tmp_path / "env" / "data.csv").split(b"\n", 1)[1] == read(tmp_path / "ref" / "data.csv").split(b"\n", 1)[1]


def test_simulate_sizes_not_summing_to_p(tmp_path):
    spec = write_spec(tmp_path, {**BLOCK_SPEC, "p": 7})
    assert run("simulate", "--spec", spec, "--output-dir", tmp_path / "o") == 1
    assert not (tmp_path / "o").exists() or os.listdir(tmp_path / "o") == []


def test_raw_data_requires_log(tmp_path, capsys):
    spec = write_spec(tmp_path, {"model": "driver_modulator", "seed": 1, "n": 30, "drivers": 2, "modulators_per_driver": 2})
    assert run("simulate", "--spec", spec, "--output-dir", tmp_path / "sim") == 0
    data = tmp_path / "sim" / "data.csv"
    assert run("fit", "--input", data, "--output-dir", tmp_path / "f") == 1
    assert "--log" in capsys.readouterr().err
    assert run("fit", "--input", data, "--output-dir", tmp_path / "f", "--log") == 0


# -- cv / compare ------------------------------------------------------------------


def test_cv_separable_is_perfect(tmp_path):
    rng = np.random.default_rng(1)
    y = np.arange(40) % 2
    X = rng.standard_normal((40, 20)) + 3.0 * y[:, None]
    data = tmp_path / "sep.csv"
    data.write_text(format_csv(DataMatrix.from_array(X)))
    labels = tmp_path / "y.json"
    labels.write_text(json.dumps(y.tolist()))
    out = tmp_path / "cv"
    assert run("cv", "--input", data, "--labels", labels, "--k", 5, "--output-dir", out) == 0
    report = json.loads(read(out / "cv_report.json"))
    assert report["runs"][0]["mean_accuracy"] == 1.0
    assert read(out / "cv_folds.csv").startswith(b"# provenance:")


def test_cv_folds_exceed_n(tmp_path, noise_csv):
    assert run("cv", "--input", noise_csv, "--k", 3, "--folds", 25, "--output-dir", tmp_path / "o") == 2


def test_cv_requires_k(tmp_path, noise_csv):
    assert run("cv", "--input", noise_csv, "--output-dir", tmp_path / "o") == 2


def test_cv_threads_do_not_change_bytes(tmp_path, noise_csv):
    args = ["cv", "--input", noise_csv, "--k", 4, "--folds", 4, "--repeats", 3, "--mode", "leaky"]
    assert run(*args, "--output-dir", tmp_path / "t1", "--threads", 1) == 0
    assert run(*args, "--output-dir", tmp_path / "t4", "--threads", 4) == 0
    assert snapshot(tmp_path / "t1") == snapshot(tmp_path / "t4")


def test_compare_two_variables(tmp_path, pair_csv):
    out = tmp_path / "cmp"
    assert run("compare", "--input", pair_csv, "--output-dir", out) == 0
    report = json.loads(read(out / "report.json"))
    assert report["agreement"]["first_merge"] and report["agreement"]["top_direction"]
    assert "timing_seconds" not in report
    assert read(out / "energy.csv").decode().splitlines()[1] == "K,treelet,pca"


# -- provenance replay -------------------------------------------------------------


def test_replay_from_embedded_config(tmp_path):
    spec = write_spec(tmp_path, BLOCK_SPEC)
    run("simulate", "--spec", spec, "--output-dir", tmp_path / "sim")
    data = str(tmp_path / "sim" / "data.csv")
    labels = str(tmp_path / "sim" / "labels.json")
    first = tmp_path / "first"
    assert run("compare", "--input", data, "--labels", labels, "--metric", "abscorr", "--output-dir", first) == 0
    config = json.loads(read(first / "report.json"))["provenance"]["config"]
    assert main(argv_from_config(config, str(tmp_path / "again"))) == 0
    assert snapshot(first) == snapshot(tmp_path / "again")


def test_failure_leaves_existing_artifacts_untouched(tmp_path, noise_csv):
    out = tmp_path / "o"
    assert run("fit", "--input", noise_csv, "--output-dir", out) == 0
    before = snapshot(out)
    assert run("fit", "--input", noise_csv, "--output-dir", out, "--level", 99) == 2
    assert snapshot(out) == before
