import csv
import json

import numpy as np
import pytest

from crfgat import CrfModel, GaussianBilateral, SyntheticSpec, gen_synthetic, init_crf_gat
from crfgat import io
from crfgat.cli import run_cli
from crfgat.gat import CrfGatModel, GatLayerParams
from conftest import random_model


@pytest.fixture
def t1_path(tmp_path, t1):
    path = tmp_path / "t1.json"
    io.save_model(t1, path)
    return path


@pytest.fixture
def grid(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"schema_version": 1, "topology": "grid", "width": 5, "height": 4, "n_labels": 2,
                                "noise_sigma": 0.6, "blob_count": 2, "seed": 3, "items": 2}))
    data = tmp_path / "data.json"
    assert run_cli(["gen", "--spec", str(spec), "--out", str(data)]) == 0
    return data


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_matches_library(grid):
    ds = io.load_dataset(grid)
    assert ds == gen_synthetic(SyntheticSpec.grid(5, 4, n_labels=2, noise_sigma=0.6, blob_count=2, seed=3, items=2))


def test_infer_zero_kernel(tmp_path, rng):
    m = random_model(rng, n=5, k=3)
    m = CrfModel(m.sequence, m.unary, m.compatibility, m.kernel.scaled(0.0))
    model_path, out = tmp_path / "m.json", tmp_path / "p.json"
    io.save_model(m, model_path)
    assert run_cli(["infer", "--model", str(model_path), "--algo", "mf", "--out", str(out)]) == 0
    (labels,) = io.read_labelings(out)
    assert np.array_equal(labels, np.argmin(m.unary, axis=1))


def test_compare_t1(tmp_path, t1_path):
    report = tmp_path / "r.csv"
    assert run_cli(["compare", "--model", str(t1_path), "--algos", "mf,exact", "--report", str(report)]) == 0
    rows = read_csv(report)
    assert [r["algo"] for r in rows] == ["mf", "exact"]
    assert all(r["labels"] == "1 2" for r in rows)
    assert float(rows[1]["energy"]) == pytest.approx(0.5)
    assert float(rows[1]["linf_vs_exact"]) == 0.0
    assert list(rows[0].keys()) == ["algo", "item", "accuracy", "energy", "linf_vs_exact", "seconds", "labels"]


def test_eval_identical(tmp_path, grid, capsys):
    assert run_cli(["eval", "--pred", str(grid), "--gold", str(grid)]) == 0
    assert capsys.readouterr().out.strip() == "1.0"


@pytest.mark.parametrize("algo", ["mf", "mf-seq", "gat", "exact", "gibbs"])
def test_infer_all_algos_on_dataset(tmp_path, algo):
    spec = SyntheticSpec.chain(6, n_labels=2, noise_sigma=0.5, blob_count=2, seed=1, items=2)
    data = tmp_path / "d.json"
    io.save_dataset(gen_synthetic(spec), data)
    model = tmp_path / "g.json"
    io.save_model(init_crf_gat(2, 2, 2, GaussianBilateral.single(0.3, 1.0, 2.0), seed=0), model)
    out = tmp_path / "p.json"
    argv = ["infer", "--model", str(model), "--data", str(data), "--algo", algo, "--out", str(out),
            "--sweeps", "500", "--burn-in", "50", "--seed", "4", "--trace", str(tmp_path / "t.csv"),
            "--labels-csv", str(tmp_path / "l.csv")]
    assert run_cli(argv) == 0
    labels = io.read_labelings(out)
    assert len(labels) == 2 and all(y.shape == (6,) for y in labels)
    assert (tmp_path / "l_0.csv").exists() and (tmp_path / "l_1.csv").exists()
    if algo.startswith("mf"):
        assert io.read_trace_csv(tmp_path / "t_0.csv")
    # deterministic given the seed
    out2 = tmp_path / "p2.json"
    argv[argv.index(str(out))] = str(out2)
    assert run_cli(argv) == 0
    assert out.read_text() == out2.read_text()


def test_gat_depth1_equals_mf_one_iter(tmp_path, grid, rng):
    base = init_crf_gat(2, 2, 1, GaussianBilateral.single(0.8, 1.2, 1.0), seed=2)
    shared = CrfGatModel.shared(base.layers[0], 1, base.unary_params)
    model = tmp_path / "m.json"
    io.save_model(shared, model)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli(["infer", "--model", str(model), "--data", str(grid), "--algo", "gat", "--out", str(a)]) == 0
    assert run_cli(["infer", "--model", str(model), "--data", str(grid), "--algo", "mf", "--max-iter", "1",
                    "--out", str(b)]) == 0
    for x, y in zip(io.read_labelings(a), io.read_labelings(b)):
        assert np.array_equal(x, y)


def test_train_command(tmp_path, grid):
    model = tmp_path / "m.json"
    io.save_model(CrfGatModel(init_crf_gat(2, 2, 2, GaussianBilateral.single(1.0, 1.0, 50.0)).layers), model)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 1, "learning_rate": 0.05, "epochs": 20, "seed": 5}))
    out, trace = tmp_path / "trained.json", tmp_path / "loss.csv"
    argv = ["train", "--model", str(model), "--data", str(grid), "--config", str(cfg), "--out", str(out),
            "--loss-trace", str(trace)]
    assert run_cli(argv) == 0
    trained = io.load_model(out)
    assert trained.unary_params is not None
    lines = trace.read_text().splitlines()
    assert lines[0] == "epoch,loss" and len(lines) == 21
    losses = io.read_trace_csv(trace)
    assert losses[-1] < losses[0]


def test_exit_codes(tmp_path, t1_path, capsys):
    assert run_cli([]) == 1
    assert run_cli(["infer", "--model", str(t1_path)]) == 1
    assert run_cli(["infer", "--model", str(t1_path), "--algo", "nope", "--out", "x"]) == 1
    assert run_cli(["eval", "--pred", "a", "--gold", "b", "--bogus"]) == 1
    missing = tmp_path / "missing.json"
    assert run_cli(["eval", "--pred", str(missing), "--gold", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err
    assert run_cli(["compare", "--model", str(t1_path), "--algos", "mf,magic", "--report", "r.csv"]) == 1


def test_exact_cap_exit(tmp_path, capsys):
    rng = np.random.default_rng(0)
    big = random_model(rng, n=25, k=2)
    path = tmp_path / "big.json"
    io.save_model(big, path)
    assert run_cli(["infer", "--model", str(path), "--algo", "exact", "--out", str(tmp_path / "o.json")]) == 2
    assert str(2**25) in capsys.readouterr().err


def test_help(capsys):
    assert run_cli(["--help"]) == 0
    assert run_cli(["infer", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--model", "--data", "--algo", "--max-iter", "--tol", "--seed", "--trace"):
        assert flag in text
