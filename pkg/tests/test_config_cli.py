from __future__ import annotations

import csv

import pytest

from graph_rho.cli import main
from graph_rho.config import ConfigError, load_config, parse_config, rho_config, train_config

CFG = """\
# tiny pipeline
rho.window_w = 8
rho.step_s = 3
subsolver.max_moves = 300
subsolver.restarts = 2
train.d = 8
train.heads = 2
train.layers = 1
train.epochs = 2
train.batch_size = 8
"""


def test_parse_config_types_and_overrides(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(CFG)
    flat = load_config(path, ["rho.gamma = 0.4"])
    rc = rho_config(flat)
    assert (rc.window_w, rc.step_s, rc.gamma) == (8, 3, 0.4)
    assert rc.subsolver.max_moves == 300 and rc.subsolver.kind == "heuristic"
    tc = train_config(flat, lam=0.0, seed=None)
    assert tc.d == 8 and tc.lam == 0.0 and tc.seed == 0


@pytest.mark.parametrize("text", [
    "rho.window_w 80",
    "window_w = 80",
    "bogus.window_w = 80",
])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("text", [
    "rho.window_w = eighty",
    "rho.no_such_field = 1",
    "rho.step_s = 90",
])
def test_bad_values_are_config_errors(text):
    with pytest.raises(ConfigError):
        rho_config(parse_config(text))


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_generate_is_deterministic(tmp_path):
    args = ["generate", "--machines", "3", "--jobs", "4", "--ops", "3", "--count", "3", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    with open(tmp_path / "a" / "manifest.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["seed"] for r in rows] == ["7", "8", "9"] and rows[0]["file"] == "inst_0000.fjs"


def test_generate_rejects_zero_count(tmp_path, capsys):
    assert main(["generate", "--machines", "2", "--jobs", "2", "--ops", "2", "--count", "0",
                 "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_inputs_give_clear_errors(tmp_path, capsys):
    assert main(["eval", "--model", str(tmp_path / "m.bin"), "--data", str(tmp_path / "d.npz")]) == 2
    assert main(["train", "--data", str(tmp_path / "none.npz"), "--out", str(tmp_path / "m")]) == 2
    assert main(["report", "--results", str(tmp_path / "r.csv")]) == 2
    err = capsys.readouterr().err
    assert "does not exist" in err and "Traceback" not in err


def test_run_requires_model_for_learned(tmp_path, capsys):
    main(["generate", "--machines", "2", "--jobs", "2", "--ops", "2", "--out", str(tmp_path / "i")])
    assert main(["run", "--instances", str(tmp_path / "i"), "--policies", "learned",
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--instances", str(tmp_path / "i"), "--policies", "nope",
                 "--out", str(tmp_path / "o")]) == 2
    assert "--model" in capsys.readouterr().err


def test_end_to_end_pipeline(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(CFG)
    c = ["--config", str(cfg)]
    assert main(["generate", "--machines", "3", "--jobs", "4", "--ops", "4", "--count", "3",
                 "--out", str(tmp_path / "train")]) == 0
    assert main(["generate", "--machines", "3", "--jobs", "4", "--ops", "4", "--count", "2", "--seed", "100",
                 "--out", str(tmp_path / "test")]) == 0
    assert main(["collect", "--instances", str(tmp_path / "train"), "--out", str(tmp_path / "d.npz")] + c) == 0
    assert "rho.window_w = 8" in (tmp_path / "d.npz.config").read_text()
    assert main(["train", "--data", str(tmp_path / "d.npz"), "--out", str(tmp_path / "m.bin"), "--quiet"] + c) == 0
    assert (tmp_path / "m.bin.log.csv").read_text().count("\n") == 3
    assert main(["train", "--data", str(tmp_path / "d.npz"), "--out", str(tmp_path / "g.bin"),
                 "--lambda", "0", "--quiet"] + c) == 0
    assert main(["eval", "--model", str(tmp_path / "m.bin"), "--data", str(tmp_path / "d.npz")]) == 0
    assert '"auc_fix"' in capsys.readouterr().out
    runs = []
    for out in ("r1", "r2"):
        assert main(["run", "--instances", str(tmp_path / "test"), "--ladder", "--model", str(tmp_path / "m.bin"),
                     "--gnn-model", str(tmp_path / "g.bin"), "--out", str(tmp_path / out), "--quiet"] + c) == 0
        with open(tmp_path / out / "results.csv", newline="") as fh:
            runs.append([{k: v for k, v in r.items() if k != "wall_ms"} for r in csv.DictReader(fh)])
    assert runs[0] == runs[1]
    assert [r["policy"] for r in runs[0][:4]] == ["default", "gnn", "gnn_cpa", "full"]
    assert "run.cells" in (tmp_path / "r1" / "config.txt").read_text()

    assert main(["report", "--results", str(tmp_path / "r1" / "results.csv"), "--out", str(tmp_path / "rep1")]) == 0
    assert main(["report", "--results", str(tmp_path / "r1" / "results.csv"), "--out", str(tmp_path / "rep2")]) == 0
    a, b = _files(tmp_path / "rep1"), _files(tmp_path / "rep2")
    assert set(a) == {"summary.csv", "summary.txt", "prob_hist.csv", "prob_ridgeline.svg",
                      "tau_trajectory.csv", "tau_trajectory.svg"}
    assert a == b
