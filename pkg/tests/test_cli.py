import json

from groundplan.cli import main


def test_plan_text(capsys):
    assert main(["plan", "--task", "Get glass of milk"]) == 0
    out = capsys.readouterr().out
    assert "[WALK]" in out and "executability" in out.lower()


def test_plan_json(capsys):
    assert main(["plan", "--task", "Get glass of milk", "--json", "--mode", "vanilla"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["program"]


def test_bank_build(tmp_path, capsys):
    out = tmp_path / "bank.tsv"
    assert main(["bank", "build", "--out", str(out), "--cache", str(tmp_path / "bank.emb")]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) >= 3336
    assert (tmp_path / "bank.emb").read_bytes()[:4] == b"EMB1"


def test_eval_grid_report(tmp_path, capsys):
    runs = tmp_path / "eval.jsonl"
    assert main(["eval", "--ablations", "--out", str(runs), "--workers", "1"]) == 0
    table = capsys.readouterr().out
    assert "- w/o Action Translation" in table
    assert main(["report", str(runs)]) == 0
    assert "Executability" in capsys.readouterr().out

    grid = tmp_path / "grid.jsonl"
    spec = json.dumps({"epsilon": [0, 0.8], "k": [1]})
    assert main(["grid", "--out", str(grid), "--grid", spec, "--workers", "1"]) == 0
    assert main(["grid", "--out", str(grid), "--grid", spec, "--workers", "1"]) == 0
    assert len(grid.read_text().splitlines()) == 2
    capsys.readouterr()
    assert main(["report", str(grid), "--rank", "--tsv"]) == 0
    assert "\t" in capsys.readouterr().out


def test_error_exit_codes(tmp_path, capsys):
    assert main(["report", str(tmp_path / "missing.jsonl")]) == 1
    assert main(["plan", "--task", "x", "--scene", "nowhere"]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("Task: A\n[FLY] <moon>(1)\n")
    assert main(["eval", "--dataset", str(bad), "--holdout", "1"]) == 2
    assert "error" in capsys.readouterr().err.lower()
