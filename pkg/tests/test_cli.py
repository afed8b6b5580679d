import csv
import json

import numpy as np
import pytest

from gpcert.cli import main
from gpcert.data import read_csv, write_csv
from gpcert.io import ModelFileError, load_job, load_model, model_from_dict, model_to_dict
from gpcert.kernels import SquaredExponential
from gpcert.model import fit_regression


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["gen", "--n-train", "60", "--n-test", "20", "--seed", "3", "--out", str(d)]) == 0
    assert main(["train", "--data", str(d / "train.csv"), "--out", str(d / "model.json"),
                 "--variance", "4", "--lengthscale", "1.5"]) == 0
    return d


def _job(d, name, **kw):
    doc = {"model": "model.json", "gammas": [0.05], "epsilon": 0.01, **kw}
    p = d / name
    p.write_text(json.dumps(doc))
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_is_deterministic_and_balanced(tmp_path):
    for sub in ("a", "b"):
        assert main(["gen", "--n-train", "101", "--n-test", "10", "--seed", "5", "--out", str(tmp_path / sub)]) == 0
    assert (tmp_path / "a" / "train.csv").read_bytes() == (tmp_path / "b" / "train.csv").read_bytes()
    _, y, names, target = read_csv(tmp_path / "a" / "train.csv")
    assert set(y) == {1.0, 2.0} and abs((y == 1).sum() - (y == 2).sum()) <= 1
    assert names == ["x1", "x2"] and target == "label"


def test_train_rejects_single_class(tmp_path):
    write_csv(tmp_path / "one.csv", np.zeros((3, 2)), [1, 1, 1])
    assert main(["train", "--data", str(tmp_path / "one.csv"), "--out", str(tmp_path / "m.json")]) == 1
    assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.json")]) == 1


def test_retrain_gives_identical_bytes(trained, tmp_path):
    assert main(["train", "--data", str(trained / "train.csv"), "--out", str(tmp_path / "m.json"),
                 "--variance", "4", "--lengthscale", "1.5"]) == 0
    assert (tmp_path / "m.json").read_bytes() == (trained / "model.json").read_bytes()
    assert load_model(tmp_path / "m.json").classes == [1, 2]


def test_regression_training_matches_dense_solve(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (5, 2))
    y = rng.normal(size=5)
    write_csv(tmp_path / "r.csv", X, y)
    assert main(["train", "--data", str(tmp_path / "r.csv"), "--out", str(tmp_path / "r.json"),
                 "--task", "regression", "--noise", "0.1"]) == 0
    m = load_model(tmp_path / "r.json")
    K = SquaredExponential(1.0, [0.5, 0.5])(X, X) + 0.1 * np.eye(5)
    np.testing.assert_allclose(m.S, np.linalg.inv(K), atol=1e-10)
    np.testing.assert_allclose(m.t[0], np.linalg.solve(K, y), atol=1e-10)


def test_model_round_trip_and_corruption():
    m = fit_regression([[0.0], [1.0]], [1.0, -1.0], SquaredExponential(1.0, [1.0]), 0.1)
    doc = model_to_dict(m, references=[(np.array([0.5]), m.mean(np.array([[0.5]])))])
    back = model_from_dict(json.loads(json.dumps(doc)))
    np.testing.assert_array_equal(back.S, m.S)
    doc["t"] = [[1.0, -0.9]]
    with pytest.raises(ModelFileError):
        model_from_dict(doc)
    model_from_dict(doc, verify=False)
    with pytest.raises(ModelFileError):
        model_from_dict({"X": [[0.0]], "S": [[1.0]], "t": [0.0], "task": "ordinal", "kernel": {"family": "se"}})


def test_corrupted_model_file_exits_1(trained, tmp_path):
    doc = json.loads((trained / "model.json").read_text())
    doc["t"][0][0] += 0.5
    (tmp_path / "model.json").write_text(json.dumps(doc))
    job = _job(tmp_path, "job.json", points=[[0.0, 0.0]])
    assert main(["certify", "--job", str(job), "--out", str(tmp_path / "r.json")]) == 1


def test_bad_job_exits_1(trained):
    bad = trained / "bad.json"
    bad.write_text(json.dumps({"model": "model.json", "gammas": [-1.0]}))
    assert main(["certify", "--job", str(bad), "--out", str(trained / "x.json")]) == 1
    with pytest.raises(ModelFileError):
        load_job(bad)
    wrong_dim = _job(trained, "dim.json", points=[[0.0, 0.0, 0.0]])
    assert main(["certify", "--job", str(wrong_dim), "--out", str(trained / "x.json")]) == 1


def test_empty_job(trained):
    job = _job(trained, "empty.json")
    out = trained / "empty_report.json"
    assert main(["certify", "--job", str(job), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["results"] == [] and rep["mode"] == "certify"


def test_certify_report_round_trip(trained):
    job = _job(trained, "cert.json", points=[[3.0, 0.0], [0.0, 3.0]], gammas=[0.05, 0.1])
    out = trained / "cert_report.json"
    assert main(["certify", "--job", str(job), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert len(rep["results"]) == 4
    assert all(r["status"] == "certified" for r in rep["results"])
    rows = _rows(out.with_suffix(".csv"))
    assert [r["status"] for r in rows] == ["certified"] * 4


def test_workers_do_not_change_output(trained):
    job = _job(trained, "par.json", points=[[3.0, 0.0], [0.0, 3.0], [1.5, 1.5]])
    a, b = trained / "w1.json", trained / "w2.json"
    assert main(["certify", "--job", str(job), "--out", str(a), "--workers", "1"]) == 0
    assert main(["certify", "--job", str(job), "--out", str(b), "--workers", "2"]) == 0
    strip = lambda p: [{k: v for k, v in r.items() if k != "time"} for r in json.loads(p.read_text())["results"]]
    assert strip(a) == strip(b)


def test_safety_curve_job(trained):
    job = _job(trained, "curve.json", points=[[3.0, 0.0]], gammas=[0.2, 0.1], mode="safety-curve")
    out = trained / "curve_report.json"
    assert main(["certify", "--job", str(job), "--out", str(out)]) == 0
    rows = _rows(out.with_suffix(".csv"))
    assert [float(r["gamma"]) for r in rows] == [0.1, 0.2]
    assert float(rows[1]["lower"]) <= float(rows[0]["lower"])


def test_delta_interpret_attack_csv(trained):
    job = _job(trained, "misc.json", points=[[1.5, 1.5]])
    for cmd, cols, n in (("delta", ["index", "gamma", "delta"], 1),
                         ("interpret", ["index", "gamma", "dim", "value", "lower", "upper"], 2),
                         ("attack", ["index", "gamma", "attack_success", "status", "consistent", "attack_point"], 1)):
        out = trained / f"{cmd}.csv"
        assert main([cmd, "--job", str(job), "--out", str(out)]) in (0, 2)
        rows = _rows(out)
        assert len(rows) == n and list(rows[0]) == cols
    assert all(r["consistent"] == "True" for r in _rows(trained / "attack.csv"))


def test_exhausted_budget_exits_2(trained):
    job = _job(trained, "tiny.json", points=[[1.5, 1.5]], gammas=[1.0], epsilon=1e-9,
               budgets={"max_iter": 1})
    out = trained / "tiny_report.json"
    rc = main(["certify", "--job", str(job), "--out", str(out)])
    statuses = {r["status"] for r in json.loads(out.read_text())["results"]}
    assert (rc == 2) == ("unknown" in statuses)
    assert rc in (0, 2)


def test_regression_only_modes_rejected(tmp_path):
    write_csv(tmp_path / "r.csv", np.array([[0.0], [1.0]]), [0.5, -0.5])
    assert main(["train", "--data", str(tmp_path / "r.csv"), "--out", str(tmp_path / "model.json"),
                 "--task", "regression"]) == 0
    job = _job(tmp_path, "j.json", points=[[0.5]])
    assert main(["delta", "--job", str(job), "--out", str(tmp_path / "d.csv")]) == 1
    assert main(["certify", "--job", str(job), "--out", str(tmp_path / "c.json")]) == 0
