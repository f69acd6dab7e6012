import csv
import filecmp
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kronsgp.cli import main
from kronsgp.data import (
    DatasetDescriptor,
    SyntheticFieldSpec,
    generate_synthetic,
    read_table,
    write_dataset,
    write_table,
)
from kronsgp.inputs import ProductInputs
from kronsgp.kernels import SE, Hyperparameters, Periodic, ProductKernel, pack, unpack
from kronsgp.mcmc import make_objective
from kronsgp.pipeline import load_model
from oracles import kmat, lml

WAKE = {"generator": "wake", "params": {"nx": 8, "ny": 5, "nt": 6, "test_nt": 2},
        "noise_std": 0.05, "seed": 3}
KERNEL = ProductKernel([SE((0,)), SE((1,)), Periodic(2)])
INITIAL = {"signal_std": 0.5, "leaf_params": [[0.03], [0.02], [1.0, 2.0]], "noise_std": 0.05}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def wake_config(tmp_path, model="esgp", name="cfg.json", **extra):
    doc = {"version": 1, "model": model, "seed": 0, "data": {"synthetic": WAKE},
           "kernel": KERNEL.to_dict(), "initial": INITIAL,
           "mh": {"epochs": 2, "samples_per_epoch": 50, "step": 0.05}}
    if model == "esgp":
        doc["inducing"] = [{"resolution": [4], "placement": "uniform"},
                           {"resolution": [3], "placement": "random"}, {"training": True}]
    doc.update(extra)
    return write(tmp_path / name, doc)


def grid_files(tmp_path, rng):
    inputs = ProductInputs([np.linspace(0, 1, 4), np.linspace(0, 2, 5)])
    X = inputs.expand()
    y = np.sin(3 * X[:, 0]) + np.cos(X[:, 1]) + 0.1 * rng.standard_normal(20)
    desc = DatasetDescriptor([{"name": "a", "dims": ["a"]}, {"name": "b", "dims": ["b"]}])
    write_dataset(desc, inputs, y, tmp_path / "desc.json", tmp_path / "data.csv")
    return inputs, y


def test_help_and_usage_codes(capsys):
    assert main(["--help"]) == 0
    for cmd in ("synth", "train", "predict", "evaluate", "bench", "compare"):
        assert main([cmd, "--help"]) == 0
    assert main([]) == 2
    assert main(["train"]) == 2
    assert main(["train", "--config", "x", "--out", "y", "--seed", "-1"]) == 2


def test_synth_and_invalid_spec(tmp_path, capsys):
    assert main(["synth", "--config", write(tmp_path / "s.json", WAKE),
                 "--out", str(tmp_path / "d")]) == 0
    assert "rows=240" in capsys.readouterr().out
    bad = write(tmp_path / "bad.json", {"generator": "wake", "params": {"nope": 1}})
    assert main(["synth", "--config", bad, "--out", str(tmp_path / "e")]) == 2
    assert "nope" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{")
    assert main(["synth", "--config", str(tmp_path / "broken.json"),
                 "--out", str(tmp_path / "f")]) == 2


def test_train_config_errors(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "o")]) == 2
    cfg = write(tmp_path / "c.json", {"model": "esgp", "seed": 0, "bogus": 1,
                                      "data": {"synthetic": WAKE}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    cfg = write(tmp_path / "c2.json", {"model": "egp", "data": {"synthetic": WAKE}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_numeric_failure_exit_code(tmp_path):
    theta = pack(Hyperparameters(0.5, ((0.03,), (0.02,), (1.0, 2.0)), 0.05))
    # representable, but the covariance spectrum overflows
    theta[0] = 354.0
    cfg = wake_config(tmp_path, model="egp", initial={"log": theta.tolist()})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    theta[0] = 1e4
    cfg = wake_config(tmp_path, model="egp", name="c2.json", initial={"log": theta.tolist()})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("model", ["egp", "esgp"])
def test_train_is_deterministic_and_reloads(tmp_path, model, capsys):
    cfg = wake_config(tmp_path, model=model)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    assert "epoch 1" in capsys.readouterr().err
    for f in ("model.json", "trace.csv"):
        assert filecmp.cmp(a / f, b / f, shallow=False)
    doc = json.loads((a / "model.json").read_text())
    loaded = load_model(a / "model.json")
    assert abs(loaded.model.objective - doc["objective"]) <= 1e-10
    rows = list(csv.reader(open(a / "trace.csv")))
    assert len(rows) == 1 + 101
    assert float(doc["objective"]) == max(float(r[1]) for r in rows[1:])
    c = tmp_path / "c"
    assert main(["train", "--config", cfg, "--out", str(c), "--seed", "5"]) == 0
    assert json.loads((c / "model.json").read_text())["seed"] == 5


def test_egp_full_sod_matches_dense_oracle(tmp_path, rng):
    inputs, y = grid_files(tmp_path, rng)
    kern = ProductKernel([SE((0,)), SE((1,))])
    cfg = write(tmp_path / "cfg.json", {
        "model": "egp", "seed": 1, "data": {"descriptor": "desc.json", "data": "data.csv"},
        "kernel": kern.to_dict(), "sod": [{"fraction": 1.0}, {"fraction": 1.0}],
        "mh": {"epochs": 2, "samples_per_epoch": 50}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "model.json").read_text())
    assert doc["sod"] == [None, None]
    hyp = unpack(doc["log_hyperparameters"], kern)
    X = inputs.expand()
    assert abs(doc["objective"] - lml(kmat(kern, hyp, X), y, hyp.noise_var)) <= 1e-8


def test_predict_matches_library_and_limits(tmp_path, capsys):
    cfg = wake_config(tmp_path, model="esgp")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    loaded = load_model(tmp_path / "m" / "model.json")
    rng = np.random.default_rng(0)
    Q = np.column_stack([rng.uniform(0, 0.4, 6), rng.uniform(-0.06, 0.06, 6),
                         rng.uniform(0, 0.5, 6)])
    Q = np.vstack([Q, [[50.0, 50.0, 0.3]]])
    write_table(tmp_path / "q.csv", ["x", "y", "t"], Q)
    out = tmp_path / "p.csv"
    assert main(["predict", "--model", str(tmp_path / "m" / "model.json"),
                 "--query", str(tmp_path / "q.csv"), "--out", str(out)]) == 0
    header, table = read_table(out)
    assert header == ["x", "y", "t", "mean", "variance", "predictive_variance"]
    mean, var = loaded.model.predict(Q)
    assert np.array_equal(table[:, :3], Q)
    assert np.array_equal(table[:, 3], mean) and np.array_equal(table[:, 4], var)
    assert_allclose(table[:, 5], var + loaded.model.hyp.noise_var, rtol=1e-15)
    # far-away query falls back to the prior
    assert abs(table[-1, 3]) <= 1e-6
    assert table[-1, 4] == pytest.approx(loaded.model.hyp.signal_var, rel=1e-6)


def test_predict_interpolates_at_small_noise(tmp_path, rng):
    inputs, y = grid_files(tmp_path, rng)
    kern = ProductKernel([SE((0,)), SE((1,))])
    init = {"signal_std": 1.0, "leaf_params": [[0.5], [0.8]], "noise_std": 1e-5}
    cfg = write(tmp_path / "cfg.json", {
        "model": "egp", "seed": 0, "data": {"descriptor": "desc.json", "data": "data.csv"},
        "kernel": kern.to_dict(), "initial": init,
        "mh": {"epochs": 1, "samples_per_epoch": 1, "step": 1e-12}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    write_table(tmp_path / "q.csv", ["a", "b"], inputs.expand())
    assert main(["predict", "--model", str(tmp_path / "o" / "model.json"),
                 "--query", str(tmp_path / "q.csv"), "--out", str(tmp_path / "p.csv")]) == 0
    _, table = read_table(tmp_path / "p.csv")
    assert_allclose(table[:, 2], y, atol=1e-3)


def test_predict_schema_mismatch(tmp_path):
    cfg = wake_config(tmp_path, model="egp")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    write_table(tmp_path / "q.csv", ["x", "y"], [[0.0, 0.0]])
    assert main(["predict", "--model", str(tmp_path / "m" / "model.json"),
                 "--query", str(tmp_path / "q.csv"), "--out", str(tmp_path / "p.csv")]) == 2


def test_evaluate(tmp_path, capsys):
    X = np.arange(6.0).reshape(3, 2)
    truth = np.array([0.5, -1.0, 2.0])
    write_table(tmp_path / "t.csv", ["a", "b", "u"], np.column_stack([X, truth]))
    write_table(tmp_path / "p.csv", ["a", "b", "mean", "variance", "predictive_variance"],
                np.column_stack([X, truth, np.full(3, 0.5), np.full(3, 1 / (2 * np.pi))]))
    assert main(["evaluate", "--predictions", str(tmp_path / "p.csv"),
                 "--truth", str(tmp_path / "t.csv"), "--out", str(tmp_path / "r")]) == 0
    doc = json.loads((tmp_path / "r" / "metrics.json").read_text())
    assert doc["rmse"] == 0.0 and doc["n_t"] == 3
    assert doc["msll"] == pytest.approx(0.0, abs=1e-12)
    capsys.readouterr()
    assert main(["evaluate", "--predictions", str(tmp_path / "p.csv"),
                 "--truth", str(tmp_path / "t.csv"), "--latent"]) == 0
    latent = json.loads(capsys.readouterr().out)
    assert latent["msll"] == pytest.approx(0.5 * np.log(np.pi), abs=1e-12)
    write_table(tmp_path / "short.csv", ["a", "b", "u"], np.column_stack([X, truth])[:2])
    assert main(["evaluate", "--predictions", str(tmp_path / "p.csv"),
                 "--truth", str(tmp_path / "short.csv")]) == 2
    shifted = np.column_stack([X + 1, truth])
    write_table(tmp_path / "shift.csv", ["a", "b", "u"], shifted)
    assert main(["evaluate", "--predictions", str(tmp_path / "p.csv"),
                 "--truth", str(tmp_path / "shift.csv")]) == 2


def test_bench_small(tmp_path, capsys):
    spec = write(tmp_path / "bench.json", {
        "version": 1,
        "data": {"synthetic": {"generator": "cavity",
                               "params": {"n_space": 120, "n_test_space": 2}}},
        "subspace": 0, "kinds": ["esgp", "egp"], "samples": {"esgp": 2, "egp": 2},
        "inducing": [{"resolution": [3, 4]}, {"training": True}],
        "kernel": ProductKernel([SE((0, 1)), SE((2,))]).to_dict()})
    assert main(["bench", "--config", spec, "--out", str(tmp_path / "b"),
                 "--fractions", "0.25,0.5,1"]) == 0
    out = capsys.readouterr().out
    assert "esgp slope=" in out and "egp slope=" in out
    slopes = list(csv.DictReader(open(tmp_path / "b" / "slopes.csv")))
    assert {r["kind"] for r in slopes} == {"esgp", "egp"}
    rows = list(csv.DictReader(open(tmp_path / "b" / "summary.csv")))
    assert len(rows) == 6
    assert main(["bench", "--config", spec, "--out", str(tmp_path / "b"),
                 "--fractions", "0.5"]) == 2


def test_compare_identical_configs(tmp_path, capsys):
    a = wake_config(tmp_path, name="a.json", label="A", mh={"epochs": 1, "samples_per_epoch": 10})
    b = wake_config(tmp_path, name="b.json", label="B", mh={"epochs": 1, "samples_per_epoch": 10})
    assert main(["compare", "--config", a, b, "--seeds", "3", "--out", str(tmp_path / "c")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "c" / "compare.csv")))
    assert len(rows) == 6
    by = {lab: [(r["seed"], r["rmse"], r["msll"]) for r in rows if r["label"] == lab]
          for lab in "AB"}
    assert by["A"] == by["B"]
    assert len({r[1] for r in by["A"]}) == 3
    summary = list(csv.DictReader(open(tmp_path / "c" / "compare_summary.csv")))
    assert summary
    assert main(["compare", "--config", a, "--seeds", "2", "--out", str(tmp_path / "d")]) == 2


def test_objective_of_reloaded_model_matches_fresh_objective(tmp_path):
    cfg = wake_config(tmp_path, model="esgp")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    loaded = load_model(tmp_path / "m" / "model.json")
    f = make_objective("esgp", loaded.model.fit.inputs, _y_of(loaded), loaded.model.kernel,
                       loaded.model.inducing)
    assert abs(f(loaded.model.theta) - loaded.doc["objective"]) <= 1e-10


def _y_of(loaded):
    ds = generate_synthetic(SyntheticFieldSpec.from_dict(loaded.doc["data"]["synthetic"]))
    return ds.inputs.subset_values(ds.y, loaded.doc["sod"])
