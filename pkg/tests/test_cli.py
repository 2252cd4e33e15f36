import json
import re
import subprocess
import sys

import numpy as np
import pytest

from survrules.cli import load_model, main, resolve
from survrules.data import PAPER_SCHEMA, load_csv, synth_generate, paper_synth_spec

QUICK = ["--iterations", "400", "--burn-in", "200", "--chains", "1"]


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "250", "--seed", "3", "--out", str(d / "c.csv")]) == 0
    return d


def test_synth_outputs(cohort):
    ds = load_csv(cohort / "c.csv", PAPER_SCHEMA)
    assert len(ds) == 250 and ds.equals(synth_generate(paper_synth_spec(), 250, 3))
    assert json.loads((cohort / "c.schema.json").read_text())
    cfg = json.loads((cohort / "c.csv.config.json").read_text())
    assert cfg["command"] == "synth" and cfg["n"] == 250


def test_synth_is_byte_identical(tmp_path):
    for name in ("a.csv", "b.csv"):
        assert main(["synth", "--n", "50", "--seed", "9", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_mine(cohort):
    out = cohort / "rules.json"
    assert main(["mine", "--in", str(cohort / "c.csv"), "--out", str(out), "--max-card", "1"]) == 0
    rules = json.loads(out.read_text())
    assert rules and all(len(r["items"]) == 1 for r in rules)


BRL_LINE = re.compile(r"^(IF .+ THEN|ELSE IF .+ THEN|ELSE|IF TRUE THEN) probability of survival > 1 yr: "
                      r"\d{1,3}% \(\d{1,3}%, \d{1,3}%\)$")
FRL_LINE = re.compile(r"^(IF .+ THEN|ELSE IF .+ THEN|ELSE) probability of survival > 1 yr: \d{1,3}% \(support: \d+\)$")


@pytest.mark.parametrize("model,extra,grammar", [
    ("brl", QUICK, BRL_LINE),
    ("frl", ["--iterations", "500", "--warm-iterations", "100", "--restarts", "1"], FRL_LINE),
    ("cox", ["--penalizers", "0.1"], None),
    ("rf", ["--trees", "20"], None),
    ("lr", ["--c-grid", "1.0"], None),
])
def test_train_and_reload(cohort, model, extra, grammar):
    out = cohort / f"{model}.json"
    assert main(["train", "--in", str(cohort / "c.csv"), "--out", str(out), "--model", model, *extra]) == 0
    doc = json.loads(out.read_text())
    assert doc["model"] == model
    probe = synth_generate(paper_synth_spec(), 100, 42)
    a = load_model(doc).predict(probe)
    b = load_model(json.loads(out.read_text())).predict(probe)
    assert np.array_equal(a, b) and set(np.unique(a)) <= {0, 1}
    if grammar is not None:
        lines = (cohort / f"{model}.json.txt").read_text().splitlines()
        assert lines and all(grammar.match(x) for x in lines)


def test_train_is_byte_identical(cohort):
    paths = [cohort / f"twice{i}.json" for i in range(2)]
    for p in paths:
        assert main(["train", "--in", str(cohort / "c.csv"), "--out", str(p), "--model", "brl", *QUICK]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_eval_outputs(cohort):
    out = cohort / "eval.json"
    assert main(["eval", "--in", str(cohort / "c.csv"), "--out", str(out), "--model", "lr",
                 "--c-grid", "1.0", "--seeds", "1"]) == 0
    doc = json.loads(out.read_text())
    assert doc["n_runs"] == 5
    table = (cohort / "eval.json.table.txt").read_text().splitlines()
    assert re.match(r"^LR\s+\.\d{3} \(\.\d{3}\)", table[1])
    assert (cohort / "eval.json.roc.csv").read_text().startswith("model,seed,fold,fpr,tpr\n")


def test_eval_grid_flag(cohort):
    out = cohort / "grid.json"
    assert main(["eval", "--in", str(cohort / "c.csv"), "--out", str(out), "--model", "brl", *QUICK,
                 "--seeds", "1", "--outer", "2", "--inner", "2", "--grid", '{"lam": [1.0, 3.0]}']) == 0
    runs = json.loads(out.read_text())["runs"]
    assert all(r["params"]["lam"] in (1.0, 3.0) and len(r["inner_scores"]) == 2 for r in runs)


@pytest.mark.parametrize("method,model", [("surrogate", "lr"), ("permutation", "lr"), ("cox-coef", "cox")])
def test_explain(cohort, method, model):
    src = cohort / f"{model}.json"
    if not src.exists():
        extra = ["--penalizers", "0.1"] if model == "cox" else ["--c-grid", "1.0"]
        assert main(["train", "--in", str(cohort / "c.csv"), "--out", str(src), "--model", model, *extra]) == 0
    out = cohort / f"explain-{method}.json"
    assert main(["explain", "--model", str(src), "--in", str(cohort / "c.csv"), "--out", str(out),
                 "--method", method, "--samples", "800", "--repeats", "2"]) == 0
    doc = json.loads(out.read_text())
    assert doc["method"] == method
    if method == "surrogate":
        assert len(doc["top"]) == 10 and 0.0 <= doc["fidelity_r2"] <= 1.0
    elif method == "permutation":
        assert len(doc["features"]) == 19
    else:
        assert len(doc["most_negative"]) == 5 and len(doc["most_positive"]) == 5


def test_explain_rejects_wrong_pairing(cohort, capsys):
    src = cohort / "cox.json"
    if not src.exists():
        main(["train", "--in", str(cohort / "c.csv"), "--out", str(src), "--model", "cox", "--penalizers", "0.1"])
    code = main(["explain", "--model", str(src), "--in", str(cohort / "c.csv"), "--out", str(cohort / "x.json")])
    assert code == 2
    assert capsys.readouterr().err.startswith("survrules: error[usage]:")


def test_preprocess(tmp_path):
    rng = np.random.default_rng(0)
    n = 80
    size = rng.uniform(0, 120, n)
    days = np.where(size > 60, 200, 600)
    lines = ["size,site,survival_days,event_observed"]
    for i in range(n):
        s = "" if i % 9 == 0 else f"{size[i]:.3f}"
        site = "" if i % 11 == 0 else ("left" if i % 2 else "right")
        lines.append(f"{s},{site},{days[i]},1")
    (tmp_path / "raw.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "cols.json").write_text(json.dumps({"columns": [
        {"name": "size", "kind": "continuous", "bounds": [0, 120]}, {"name": "site", "kind": "categorical"}]}))
    out = tmp_path / "clean.csv"
    assert main(["preprocess", "--in", str(tmp_path / "raw.csv"), "--columns", str(tmp_path / "cols.json"),
                 "--out", str(out), "--iterations", "300", "--methods", "uniform", "quantile",
                 "--bins", "2", "4"]) == 0
    report = json.loads((tmp_path / "clean.csv.report.json").read_text())
    assert set(report["imputation"]) == {"size", "site"}
    assert len(report["discretisation"]["size"]["candidates"]) == 4
    schema = json.loads((tmp_path / "clean.schema.json").read_text())
    assert [f["name"] for f in schema["features"]] == ["site", "size"]


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 20, "seed": 5}))
    cmd, opts = resolve(["synth", "--config", str(cfg), "--seed", "6", "--out", "x.csv"])
    assert cmd == "synth" and opts["n"] == 20 and opts["seed"] == 6


@pytest.mark.parametrize("argv,code,kind", [
    ([], 2, "usage"),
    (["synth"], 2, "usage"),
    (["train", "--in", "x.csv", "--out", "y.json", "--lam", "abc"], 2, "usage"),
    (["bogus"], 2, "usage"),
])
def test_usage_errors(argv, code, kind, capsys):
    assert main(argv) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith(f"survrules: error[{kind}]:")


@pytest.mark.parametrize("body", ['{"n": "ten"}', '{"colour": 1}', "[1, 2]", "{not json"])
def test_config_errors(tmp_path, body, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(body)
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 3
    assert capsys.readouterr().err.startswith("survrules: error[config]:")


def test_schema_errors(cohort, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    text = (cohort / "c.csv").read_text().splitlines()
    header, first = text[0], text[1].split(",")
    first[0] = "Nonsense"
    bad.write_text("\n".join([header, ",".join(first)]) + "\n")
    code = main(["mine", "--in", str(bad), "--out", str(tmp_path / "r.json"), "--schema",
                 str(cohort / "c.schema.json")])
    assert code == 4
    assert "row 2" in capsys.readouterr().err
    assert main(["mine", "--in", str(bad), "--out", str(tmp_path / "r.json")]) == 4


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "survrules", "synth", "--n", "10", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and out.exists()
    proc = subprocess.run([sys.executable, "-m", "survrules", "train"], capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stderr.startswith("survrules: error[usage]:")
