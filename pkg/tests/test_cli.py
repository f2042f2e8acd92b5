import json
import re

import pytest
from click.testing import CliRunner

from attnfuse._files import tree_hashes
from attnfuse.cli import expand_subsets, main

DOCUMENTED = {
    None: ["--config", "--seed", "--quiet"],
    "synth": ["--preset", "--users", "--duration", "--seed", "--out"],
    "ingest-check": ["--data"],
    "label": ["--data", "--low", "--high", "--window", "--out"],
    "eval": ["--dataset", "--subsets", "--include-hd", "--threshold-mode", "--seed", "--out"],
    "report": ["--results"],
}


def run(*args, ok=True):
    res = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    if ok:
        assert res.exit_code == 0, res.output
    return res


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    run("--quiet", "synth", "--preset", "easy", "--users", 4, "--duration", 300, "--seed", 3, "--out", root / "data")
    run("--quiet", "label", "--data", root / "data", "--out", root / "ds")
    return root


@pytest.mark.parametrize("command", list(DOCUMENTED))
def test_help_lists_documented_flags(command):
    args = ["--help"] if command is None else [command, "--help"]
    out = run(*args).output
    for flag in DOCUMENTED[command]:
        assert re.search(rf"(^|[\s,/]){re.escape(flag)}\b", out), (command, flag)


def test_synth_writes_sessions_and_is_deterministic(tmp_path):
    run("synth", "--preset", "easy", "--users", 6, "--duration", 70, "--seed", 42, "--out", tmp_path / "a")
    run("synth", "--preset", "easy", "--users", 6, "--duration", 70, "--seed", 42, "--out", tmp_path / "b")
    dirs = sorted(p.name for p in (tmp_path / "a").iterdir() if p.is_dir())
    assert dirs == [f"u{i:02d}" for i in range(6)]
    ha = {k: v for k, v in tree_hashes(tmp_path / "a").items() if k != "run.json"}
    hb = {k: v for k, v in tree_hashes(tmp_path / "b").items() if k != "run.json"}
    assert ha == hb


def test_synth_rejects_zero_users(tmp_path):
    res = run("synth", "--users", 0, "--out", tmp_path, ok=False)
    assert res.exit_code != 0
    err = json.loads(res.stderr.strip().splitlines()[-1])
    assert err["error"] == "invalid_params"


def test_rerun_flagged_as_reproduction(tmp_path):
    args = ("synth", "--preset", "null", "--users", 1, "--duration", 61, "--out", tmp_path)
    run(*args)
    assert json.loads((tmp_path / "run.json").read_text())["reproduction"] is False
    run(*args)
    manifest = json.loads((tmp_path / "run.json").read_text())
    assert manifest["reproduction"] is True and manifest["identical_outputs"] is True
    assert len(list(tmp_path.glob("run.json"))) == 1


def test_ingest_check(workspace, tmp_path):
    res = run("ingest-check", "--data", workspace / "data", "--out", tmp_path / "r.json")
    assert res.output.count("\n") == 4
    report = json.loads((tmp_path / "r.json").read_text())
    assert set(report) == {"u00", "u01", "u02", "u03"}


def test_label_counts(workspace, tmp_path):
    res = run("label", "--data", workspace / "data", "--out", tmp_path / "ds")
    m = re.search(r"total=(\d+) high=(\d+) low=(\d+) excluded=(\d+)", res.output)
    total, high, low, excluded = map(int, m.groups())
    assert high + low <= total
    assert total == 4 * (300 - 60 + 1)


def test_label_rejects_equal_percentiles(workspace, tmp_path):
    res = run("label", "--data", workspace / "data", "--low", 50, "--high", 50, "--out", tmp_path / "x", ok=False)
    assert res.exit_code != 0
    assert json.loads(res.stderr.strip().splitlines()[-1])["error"] == "invalid_params"


def _table_rows(output):
    return [l for l in output.splitlines() if "|" in l and not l.startswith("subset")]


def test_eval_single_subset(workspace, tmp_path):
    res = run("eval", "--dataset", workspace / "ds", "--subsets", "eb", "--out", tmp_path / "r")
    assert len(_table_rows(res.output)) == 1
    assert (tmp_path / "r" / "roc_eb.csv").exists()
    assert (tmp_path / "r" / "pdf_eb.csv").exists()
    assert (tmp_path / "r" / "folds" / "u00" / "model_eb.json").exists()


def test_eval_all_and_report(workspace, tmp_path):
    res = run("eval", "--dataset", workspace / "ds", "--subsets", "all", "--out", tmp_path / "r")
    rows = _table_rows(res.output)
    assert len(rows) == 15
    sizes = [r.split("|")[0].strip().count("+") + 1 for r in rows]
    assert sizes == sorted(sizes)
    again = run("report", "--results", tmp_path / "r")
    assert _table_rows(again.output) == rows


def test_eval_unknown_module(workspace, tmp_path):
    res = run("eval", "--dataset", workspace / "ds", "--subsets", "eb;xyz", "--out", tmp_path / "r", ok=False)
    assert res.exit_code == 2
    assert "valid ids" in res.output and "eb" in res.output


def test_config_file_and_flag_precedence(workspace, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eval": {"subsets": "hp", "threshold_mode": "train_calibrated"}}))
    res = run("--config", cfg, "eval", "--dataset", workspace / "ds", "--out", tmp_path / "a")
    assert [r.split("|")[0].strip() for r in _table_rows(res.output)] == ["hp"]
    assert "acc@0.5" in res.output
    res = run("--config", cfg, "eval", "--dataset", workspace / "ds", "--subsets", "eb", "--out", tmp_path / "b")
    assert [r.split("|")[0].strip() for r in _table_rows(res.output)] == ["eb"]


def test_config_schema_violation(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eval": {"subsets": 3}}))
    res = run("--config", cfg, "report", "--results", tmp_path, ok=False)
    assert res.exit_code == 2 and "schema" in res.output


def test_global_seed_reaches_commands(tmp_path):
    run("--seed", 9, "synth", "--users", 1, "--duration", 61, "--out", tmp_path)
    assert json.loads((tmp_path / "run.json").read_text())["config"]["seed"] == 9


def test_quiet(workspace, tmp_path):
    res = run("--quiet", "eval", "--dataset", workspace / "ds", "--subsets", "eb", "--out", tmp_path / "r")
    assert res.stdout == ""


def test_expand_subsets():
    assert expand_subsets("eb;eb+hp;hp+eb") == ["eb", "eb+hp"]
    assert len(expand_subsets("all")) == 15
    assert len(expand_subsets("all", include_hd=True)) == 31
    assert "hd" not in expand_subsets("all")
    with pytest.raises(ValueError):
        expand_subsets(";")
