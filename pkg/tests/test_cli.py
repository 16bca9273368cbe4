import json
import subprocess
import sys

import pytest

from worstfa import load_model, load_score_table
from worstfa.cli import run
from worstfa.data import read_curve_csv


@pytest.fixture
def workdir(tmp_path):
    spec = {"family": "plda", "d": [0.3, 0.6, 1.2, 2.5], "n_speakers": 25, "L": 6, "seed": 0}
    (tmp_path / "gt.json").write_text(json.dumps(spec))
    assert run(["simulate", "--spec", str(tmp_path / "gt.json"), "--out", str(tmp_path / "s.csv")]) == 0
    return tmp_path


def test_simulate_writes_scores(workdir):
    t = load_score_table(workdir / "s.csv")
    assert t.n_pairs == 25 * 24 and t.n_scores == 25 * 24 * 6


def test_simulate_inline_model(tmp_path, workdir):
    art = {"version": "worstfa-model/1", "family": "gaussian-ls", "structure": {"quantile": None, "warp": None},
           "params": [0.0, 0.0, 0.0, 0.0, 0.0]}
    (tmp_path / "gt2.json").write_text(json.dumps({"model": art, "n_speakers": 4, "L": 2}))
    assert run(["simulate", "--spec", str(tmp_path / "gt2.json"), "--out", str(tmp_path / "s2.csv")]) == 0
    assert load_score_table(tmp_path / "s2.csv").n_scores == 24


def test_estimate_three_rows(workdir):
    out = workdir / "curve.csv"
    assert run(["estimate", "--scores", str(workdir / "s.csv"), "--n-grid", "1,10,100", "--tau", "0.0",
                "--trials", "1000", "--seed", "7", "--out", str(out), "--with-replacement"]) == 0
    rows = read_curve_csv(out).rows
    assert len(rows) == 3 and [r.N for r in rows] == [1, 10, 100]


def test_estimate_with_svg(workdir):
    assert run(["estimate", "--scores", str(workdir / "s.csv"), "--n-grid", "1,5,20", "--tau", "-1,0,1",
                "--trials", "200", "--out", str(workdir / "c.csv"), "--svg", str(workdir / "c.svg")]) == 0
    assert (workdir / "c.svg").read_text().count("<polyline") == 3


def test_fit_plda_default_dimension(workdir):
    out = workdir / "model.json"
    assert run(["fit", "--scores", str(workdir / "s.csv"), "--family", "plda", "--dim", "10", "--warp",
                "--steps", "3", "--trials", "30", "--batch-size", "2", "--out", str(out),
                "--log", str(workdir / "log.jsonl")]) == 0
    art = load_model(out)
    assert art.family == "plda" and art.structure["D"] == 10 and art.structure["warp"] is not None
    assert len((workdir / "log.jsonl").read_text().splitlines()) == 3


def test_fit_generative_then_validate_and_extrapolate(workdir, capsys):
    model = workdir / "g.json"
    assert run(["fit", "--scores", str(workdir / "s.csv"), "--family", "gaussian-ls", "--generative",
                "--out", str(model)]) == 0
    assert run(["validate", "--model", str(model), "--scores", str(workdir / "s.csv"), "--n-range", "10,20",
                "--queries", "5", "--trials", "100"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert 0.0 <= report["mae_percent"] <= 100.0
    assert run(["extrapolate", "--model", str(model), "--n-grid", "1,1000,100000", "--tau", "0",
                "--trials", "100", "--out", str(workdir / "e.csv")]) == 0
    assert [r.N for r in read_curve_csv(workdir / "e.csv")] == [1, 1000, 100000]


def test_gradcheck_defaults(capsys):
    assert run(["gradcheck", "--family", "pwl-ls"]) == 0
    assert capsys.readouterr().out.startswith("PASS max_rel_err<1e-4")


def test_missing_file_fails_with_diagnostic(tmp_path, capsys):
    code = run(["estimate", "--scores", str(tmp_path / "none.csv"), "--n-grid", "1", "--tau", "0",
                "--out", str(tmp_path / "c.csv")])
    assert code != 0
    err = capsys.readouterr().err
    assert "error" in err and "none.csv" in err


def test_unknown_flag(capsys):
    assert run(["estimate", "--bogus"]) != 0
    assert capsys.readouterr().err


def test_population_error_surfaces(workdir, capsys):
    code = run(["estimate", "--scores", str(workdir / "s.csv"), "--n-grid", "100", "--tau", "0",
                "--out", str(workdir / "c.csv")])
    assert code == 1
    assert "impostors" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "worstfa", "gradcheck", "--family", "gaussian-ls"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("PASS")


@pytest.mark.parametrize("value", ["-1.5", "-2,-1e-3,3", "-0.5,1E+1"])
def test_negative_thresholds_need_no_equals_sign(workdir, value):
    out = workdir / "neg.csv"
    assert run(["estimate", "--scores", str(workdir / "s.csv"), "--n-grid", "2", "--tau", value,
                "--trials", "50", "--out", str(out)]) == 0
    assert [r.tau for r in read_curve_csv(out)] == [float(v) for v in value.split(",")]
