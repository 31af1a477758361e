import hashlib
import json

import pytest

from icubench.cli import (
    EXIT_DIVERGED,
    EXIT_MISSING_INPUT,
    EXIT_SCHEMA,
    EXIT_TEST_REFUSED,
    EXIT_USAGE,
    main,
)


def _digest(folder):
    return {str(p.relative_to(folder)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(folder.rglob("*")) if p.is_file()}


def _ok(*argv):
    assert main([str(a) for a in argv]) == 0, argv


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.json").write_text(json.dumps({"rate_scale": 0.3, "mortality_rate": 0.3}))
    _ok("synth", "--out", root / "tables", "--seed", 7, "--patients", 120, "--config", root / "synth.json")
    _ok("build", "--tables", root / "tables", "--out", root / "bench")
    return root


def test_build_writes_four_tasks(work):
    bench = work / "bench"
    for task, header in [("ihm", "stay,y_true"), ("decomp", "stay,period_length,y_true"),
                         ("los", "stay,period_length,y_true")]:
        for side in ("train", "test"):
            lines = (bench / task / f"{side}_listfile.csv").read_text().splitlines()
            assert lines[0] == header and len(lines) > 1
    pheno = (bench / "pheno" / "train_listfile.csv").read_text().splitlines()[0].split(",")
    assert pheno[:2] == ["stay", "period_length"] and pheno[-1] == "y_24"
    manifest = json.loads((bench / "manifest.json").read_text())
    assert len(manifest["inputs"]["tables"]["sha256"]) == 64
    assert "[extract_subjects]" in (bench / "cohort_report.txt").read_text()


def test_lstm_train_evaluate_report(work, capsys):
    model, ev, rep = work / "lstm", work / "eval", work / "report"
    _ok("train", "lstm", "--data", work / "bench", "--task", "ihm", "--out", model, "--epochs", 2, "--units", 8)
    assert {"model.bin", "run.json", "history.csv", "manifest.json"} <= {p.name for p in model.iterdir()}
    _ok("evaluate", "--data", work / "bench", "--model", model, "--split", "val", "--out", ev)
    metrics = json.loads((ev / "metrics.json").read_text())["metrics"]["ihm"]
    assert {"auc_roc", "auc_pr", "main"} <= set(metrics)
    assert "auc_roc=" in capsys.readouterr().out
    _ok("report", "--predictions", ev, "--data", work / "bench", "--out", rep, "--bootstrap", 50)
    report = json.loads((rep / "report.json").read_text())["ihm"]
    assert report["auc_roc"]["lower"] <= report["auc_roc"]["point"] <= report["auc_roc"]["upper"]
    assert (rep / "calibration_ihm.csv").exists() and (rep / "correlations.csv").exists()


def test_linear_and_features(work):
    _ok("train", "linear", "--data", work / "bench", "--task", "los", "--out", work / "lin", "--C", 0.1)
    _ok("evaluate", "--data", work / "bench", "--model", work / "lin", "--split", "test", "--final",
        "--out", work / "lin_eval")
    assert "kappa" in json.loads((work / "lin_eval" / "metrics.json").read_text())["metrics"]["los"]
    _ok("report", "--predictions", work / "lin_eval", "--out", work / "lin_rep", "--bootstrap", 20)
    assert "extended_los_auc_roc" in json.loads((work / "lin_rep" / "report.json").read_text())["los"]
    _ok("features", "--data", work / "bench", "--task", "ihm", "--out", work / "feat")
    lines = (work / "feat" / "train_features.csv").read_text().splitlines()
    assert lines[0].startswith("# layout=")
    assert len(lines[1].split(",")) == 2 + 714


def test_channelwise_multitask(work):
    out = work / "mt"
    _ok("train", "channelwise", "--data", work / "bench", "--multitask", "--out", out, "--epochs", 1,
        "--units", 4, "--channel-units", 2, "--lambdas", "1,0.5,0.5,1")
    run = json.loads((out / "run.json").read_text())
    assert run["task"] == "multitask" and run["loss"]["lambdas"] == [1.0, 0.5, 0.5, 1.0]
    _ok("evaluate", "--data", work / "bench", "--model", out, "--split", "val", "--out", work / "mt_eval")
    names = {p.name for p in (work / "mt_eval").iterdir()}
    assert {f"predictions_{t}.csv" for t in ("ihm", "decomp", "los", "pheno")} <= names


def test_runs_are_byte_identical(work):
    # same flags, same output paths: every artifact, checkpoints included, must repeat exactly
    args = [["synth", "--out", work / "rt", "--seed", 3, "--patients", 40, "--config", work / "synth.json"],
            ["build", "--tables", work / "rt", "--out", work / "rb"],
            ["train", "lstm", "--data", work / "rb", "--task", "decomp", "--out", work / "rm", "--epochs", 1,
             "--units", 4, "--deep-supervision"],
            ["train", "linear", "--data", work / "rb", "--task", "ihm", "--out", work / "rl"],
            ["evaluate", "--data", work / "rb", "--model", work / "rm", "--split", "train", "--out", work / "re"],
            ["report", "--predictions", work / "re", "--out", work / "rr", "--bootstrap", 20]]
    dirs = ["rt", "rb", "rm", "rl", "re", "rr"]
    snapshots = []
    for _ in range(2):
        for a in args:
            _ok(*a, "--jobs", 1)
        snapshots.append({d: _digest(work / d) for d in dirs})
    assert snapshots[0] == snapshots[1]
    assert "model.bin" in snapshots[0]["rm"]


def test_test_split_needs_final(work, capsys):
    code = main(["evaluate", "--data", str(work / "bench"), "--model", str(work / "lin"), "--split", "test",
                 "--out", str(work / "x")])
    assert code == EXIT_TEST_REFUSED
    assert json.loads(capsys.readouterr().err)["error"] == "test_split_refused"


def test_error_codes(work, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("ICUBENCH_DATA", raising=False)
    assert main(["build", "--tables", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == EXIT_MISSING_INPUT
    assert main(["build", "--out", str(tmp_path / "o")]) == EXIT_MISSING_INPUT
    assert main(["train", "lstm", "--data", str(work / "bench"), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["train", "gru", "--out", "x"]) == EXIT_USAGE
    assert main(["synth", "--out", str(tmp_path / "s"), "--strength", "2"]) == EXIT_SCHEMA
    (tmp_path / "bad.json").write_text(json.dumps({"colour": 1}))
    assert main(["synth", "--out", str(tmp_path / "s"), "--config", str(tmp_path / "bad.json")]) == EXIT_SCHEMA
    errs = [json.loads(line) for line in capsys.readouterr().err.splitlines()]
    assert [e["error"] for e in errs] == ["missing_input", "missing_input", "invalid_flags", "invalid_flags",
                                          "invalid_config", "invalid_config"]


def test_schema_violation(work, tmp_path):
    tables = tmp_path / "t"
    tables.mkdir()
    for p in (work / "tables").glob("*.csv"):
        text = p.read_text()
        if p.name == "ICUSTAYS.csv":
            text = text.replace("OUTTIME", "OUT_TIME", 1)
        (tables / p.name).write_text(text)
    assert main(["build", "--tables", str(tables), "--out", str(tmp_path / "o")]) == EXIT_SCHEMA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_code(work, tmp_path):
    code = main(["train", "lstm", "--data", str(work / "bench"), "--task", "ihm", "--out", str(tmp_path / "d"),
                 "--epochs", "1", "--units", "4", "--lr", "inf"])
    assert code == EXIT_DIVERGED


def test_data_root_from_environment(work, tmp_path, monkeypatch):
    monkeypatch.setenv("ICUBENCH_DATA", str(work / "bench"))
    _ok("features", "--task", "pheno", "--out", tmp_path / "f")
    assert (tmp_path / "f" / "test_features.csv").exists()
