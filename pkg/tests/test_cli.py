import csv
import json
import os

import pytest

from blase.cli import main

CFG_TEXT = """
scenario.name = LSLF
scenario.n_pairs = 60
scenario.test_size = 40
chain.iterations = 30
chain.burnin = 10
chain.thin = 2
prior.dp_classes = 5
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One generate + three runs shared by the assertion tests below."""
    root = tmp_path_factory.mktemp("pipe")
    cfg = root / "run.cfg"
    cfg.write_text(CFG_TEXT, encoding="utf-8")
    paths = {"cfg": str(cfg), "data": str(root / "data"),
             "blase": str(root / "blase"), "gazm": str(root / "gazm"),
             "pb": str(root / "pb"), "metrics": str(root / "cmp")}
    assert main(["generate", "--config", paths["cfg"], "--out",
                 paths["data"], "--seed", "5"]) == 0
    for model, key, extra in [("blase", "blase", []), ("gazm", "gazm", []),
                              ("gazm", "pb", ["--pb"])]:
        rc = main(["run", "--config", paths["cfg"], "--data", paths["data"],
                   "--out", paths[key], "--model", model, "--seed", "5"]
                  + extra)
        assert rc == 0
    return paths


def test_generate_writes_dataset(pipeline):
    for f in ("F1.csv", "F2.csv", "truth.csv", "scenario.json"):
        assert os.path.exists(os.path.join(pipeline["data"], f))
    with open(os.path.join(pipeline["data"], "scenario.json")) as fh:
        sc = json.load(fh)
    assert sc["name"] == "LSLF" and sc["seed"] == 5 and sc["n_pairs"] == 60


def test_run_outputs_trace_and_summary(pipeline):
    with open(os.path.join(pipeline["blase"], "trace.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    assert sum(int(r["stored"]) for r in rows) == 10
    assert {"y1.intercept", "y1.sigma_sq", "gamma.prog", "pmr",
            "occupied_classes"} <= set(rows[0])
    with open(os.path.join(pipeline["blase"], "summary.json")) as fh:
        s = json.load(fh)
    assert s["model"] == "blase" and s["perfectly_blocked"] is False
    assert s["draws"] == 10
    assert "y1.y2" in s["theta"]
    assert "prog" in s["gamma"]
    assert 0.0 <= s["pmr"]["mean"] <= 1.0


def test_perfectly_blocked_run_is_flagged(pipeline):
    with open(os.path.join(pipeline["pb"], "summary.json")) as fh:
        s = json.load(fh)
    assert s["model"] == "gazm" and s["perfectly_blocked"] is True
    with open(os.path.join(pipeline["gazm"], "trace.csv")) as fh:
        header = fh.readline()
    assert "gamma.prog" not in header


def test_metrics_single_directory(pipeline, tmp_path):
    out = str(tmp_path / "solo")
    assert main(["metrics", "--config", pipeline["cfg"], "--out", out,
                 pipeline["blase"]]) == 0
    with open(os.path.join(out, "comparison.json")) as fh:
        t = json.load(fh)
    assert t["replications"] == 1
    assert 0.0 <= t["pmr"] <= 1.0 and t["rmse"] > 0
    assert not os.path.exists(os.path.join(out, "comparison.csv"))


def test_metrics_three_way_comparison(pipeline):
    out = pipeline["metrics"]
    assert main(["metrics", "--config", pipeline["cfg"], "--out", out,
                 pipeline["blase"], pipeline["gazm"], pipeline["pb"]]) == 0
    with open(os.path.join(out, "comparison.json")) as fh:
        t = json.load(fh)
    assert t["replications"] == 1
    assert "y1.y2" in t["coefficients"]
    assert "dpmr" in t and "drmse" in t
    with open(os.path.join(out, "comparison.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0].keys() == {"entry", "mean", "p", "significant"}
    assert {r["entry"] for r in rows} >= {"dpmr", "drmse"}


def test_report_prints_summaries(pipeline, capsys):
    assert main(["report", pipeline["blase"], pipeline["metrics"]]) == 0
    out = capsys.readouterr().out
    assert f"== {pipeline['blase']}" in out
    assert "pmr" in out and "dpmr" in out


def test_multi_rep_tree(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("""
scenario.name = LSLF
scenario.n_pairs = 60
scenario.test_size = 40
chain.iterations = 12
chain.burnin = 2
chain.thin = 2
prior.dp_classes = 5
""", encoding="utf-8")
    data = str(tmp_path / "data")
    assert main(["generate", "--config", str(cfg), "--out", data,
                 "--reps", "2", "--seed", "3"]) == 0
    assert sorted(os.listdir(data)) == ["rep000", "rep001"]
    with open(os.path.join(data, "rep000", "scenario.json")) as fh:
        s0 = json.load(fh)
    with open(os.path.join(data, "rep001", "scenario.json")) as fh:
        s1 = json.load(fh)
    assert s0["seed"] != s1["seed"]    # per-replication derived seeds

    out_b = str(tmp_path / "b")
    out_g = str(tmp_path / "g")
    assert main(["run", "--config", str(cfg), "--data", data, "--out", out_b,
                 "--model", "blase"]) == 0
    assert main(["run", "--config", str(cfg), "--data", data, "--out", out_g,
                 "--model", "gazm"]) == 0
    assert sorted(os.listdir(out_b)) == ["rep000", "rep001"]

    cmp_dir = str(tmp_path / "cmp")
    assert main(["metrics", "--config", str(cfg), "--out", cmp_dir,
                 out_b, out_g]) == 0
    with open(os.path.join(cmp_dir, "comparison.json")) as fh:
        t = json.load(fh)
    assert t["replications"] == 2


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scenario.nonsense = 1\n", encoding="utf-8")
    assert main(["generate", "--config", str(cfg),
                 "--out", str(tmp_path / "d")]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_missing_dataset_exits_2(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["run", "--data", str(empty),
                 "--out", str(tmp_path / "o")]) == 2
    assert "no dataset" in capsys.readouterr().err


def test_collinear_design_exits_3(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("""
scenario.name = LSLF
scenario.n_pairs = 60
chain.iterations = 5
chain.burnin = 1
model.y1_terms = intercept, y2, prog=1, prog=2, prog=3
""", encoding="utf-8")
    data = str(tmp_path / "data")
    assert main(["generate", "--config", str(cfg), "--out", data,
                 "--seed", "5"]) == 0
    rc = main(["run", "--config", str(cfg), "--data", data,
               "--out", str(tmp_path / "o"), "--model", "blase"])
    assert rc == 3
    assert "failure" in capsys.readouterr().err
