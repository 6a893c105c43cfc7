import json

import numpy as np
import pytest

from mklnet.cli import main
from mklnet.data import read_dataset
from mklnet.solver import RegParams, objective


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "data"
    assert run("gen-data", "--M", 3, "--d", 1, "--q", 1, "--n", 40, "--K", 64, "--seed", 7, "--out", out) == 0
    return out / "data.csv"


def test_gen_data_byte_identical(tmp_path):
    args = ["gen-data", "--M", 8, "--d", 2, "--q", 1, "--s", 0.5, "--n", 256, "--seed", 7]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    for name in ("data.csv", "data.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "data.csv").read_text().splitlines()[0]
    assert header == "x_1,x_2,x_3,x_4,x_5,x_6,x_7,x_8,y"


def test_fit_objective_self_consistent(tmp_path, data):
    assert run("fit", "--data", data, "--branch", "elastic", "--t", 1, "--out", tmp_path / "fit") == 0
    body = json.loads((tmp_path / "fit" / "model.json").read_text())
    ds = read_dataset(data)
    kernels = ds.truth.build().kernels
    params = RegParams(**body["params"])
    # recompute from the serialized coefficients alone
    assert objective(np.array(body["alphas"]), ds, kernels, params) == pytest.approx(body["objective"], abs=1e-12)
    assert body["data"] == str(data)


@pytest.mark.parametrize("sub, extra, outputs", [
    ("gen-data", ["--n", 30, "--M", 2, "--d", 1, "--K", 32], ["data.csv", "data.json"]),
    ("fit", ["--lam1", 0.05, "--lam2", 0.01, "--lam3", 0.01], ["model.json"]),
    ("select", ["--budget", 4], ["selection.csv", "selected_model.json"]),
    ("geometry", ["--M", 3, "--I", "0,1", "--design", "copula", "--method", "mc", "--n-mc", 10_000,
                  "--K-trunc", 4], ["geometry.json"]),
    ("rates", ["--M", 2, "--d", 1, "--K", 32, "--n-grid", "16,32,64,256", "--seeds", 10],
     ["report.csv", "flags.json"]),
    ("diagnose", [], ["diagnostics.json"]),
])
def test_replay_from_manifest(tmp_path, data, sub, extra, outputs):
    if sub in ("fit", "select", "diagnose"):
        extra = ["--data", data] + extra
    if sub == "diagnose":
        assert run("fit", "--data", data, "--out", tmp_path / "m") == 0
        extra += ["--model", tmp_path / "m" / "model.json"]
    first = tmp_path / "first"
    assert run(sub, *extra, "--seed", 3, "--out", first) == 0
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["subcommand"] == sub and manifest["seed"] == 3
    assert manifest["version"] == "0.1.0"
    again = tmp_path / "again"
    assert run("--manifest", first / "manifest.json", "--out", again) == 0
    for name in outputs:
        assert (first / name).read_bytes() == (again / name).read_bytes(), name
    # no subcommand mutates its inputs
    assert read_dataset(data).n == 40


def test_rates_csv_columns(tmp_path):
    out = tmp_path / "report.csv"
    assert run("rates", "--branch", "l1", "--M", 2, "--d", 1, "--K", 32, "--n-grid", "16,32,64,256",
               "--seeds", 10, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,d,mean_err,se,branch,slope,theory_exponent"
    assert len(lines) == 5
    assert (tmp_path / "manifest.json").exists()


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("MKLNET_SEED", "11")
    assert run("gen-data", "--n", 5, "--M", 2, "--d", 1, "--K", 16, "--out", tmp_path / "e") == 0
    assert run("gen-data", "--n", 5, "--M", 2, "--d", 1, "--K", 16, "--seed", 11, "--out", tmp_path / "f") == 0
    assert json.loads((tmp_path / "e" / "manifest.json").read_text())["seed"] == 11
    assert (tmp_path / "e" / "data.csv").read_bytes() == (tmp_path / "f" / "data.csv").read_bytes()
    monkeypatch.setenv("MKLNET_SEED", "abc")
    assert run("gen-data", "--n", 5, "--out", tmp_path / "g") == 1


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 12, "M": 3, "d": 1, "K": 16}))
    assert run("--config", cfg, "gen-data", "--M", 4, "--out", tmp_path / "c") == 0
    side = json.loads((tmp_path / "c" / "data.json").read_text())
    assert (side["n"], side["M"]) == (12, 4)


def test_usage_errors(tmp_path, capsys):
    assert run("fit", "--data", "x.csv", "--bogus") == 2
    assert run("nonsense") == 2
    assert run() == 2
    capsys.readouterr()


def test_input_errors(tmp_path, data):
    assert run("fit", "--data", tmp_path / "missing.csv", "--out", tmp_path / "o") == 1
    assert run("fit", "--data", data, "--lam1", 0.1, "--out", tmp_path / "o") == 1
    assert run("geometry", "--I", "7", "--M", 2, "--out", tmp_path / "o") == 1


def test_numeric_failure_writes_diagnostics(tmp_path, data):
    rows = data.read_text().splitlines()
    cells = rows[3].split(",")
    cells[-1] = "1e300"
    rows[3] = ",".join(cells)
    bad = tmp_path / "huge.csv"
    bad.write_text("\n".join(rows) + "\n")
    out = tmp_path / "o"
    assert run("fit", "--data", bad, "--lam1", 0.1, "--lam2", 0.01, "--lam3", 0.01, "--K", 16, "--out", out) == 3
    diag = json.loads((out / "numeric_error.json").read_text())
    assert diag["error"] == "NumericError" and diag["manifest"]["subcommand"] == "fit"
