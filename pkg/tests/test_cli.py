import json

import pytest

from lingnn.cli import run_cli

CONFIG = {
    "graph": {"model": "er", "params": {"n": 24, "p": 0.3}, "seed": 5},
    "shifts": ["adj", "nlap"],
    "d_x": 4, "H": 2, "hidden": [4, 4],
    "n_bar": [12, 18],
    "dynamics": {"method": "flow", "T_max": 50},
    "trajectories": True,
    "seed": 3,
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CONFIG))
    return p


def run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_graph(tmp_path, capsys):
    out = tmp_path / "g.csv"
    code, stdout, _ = run(capsys, "gen-graph", "--model", "er", "--n", 30, "--p", 0.2, "--seed", 1, "--out", out)
    assert code == 0
    info = json.loads(stdout)
    assert info["n"] == 30 and info["path"] == str(out)
    first = out.read_bytes()
    run(capsys, "gen-graph", "--model", "er", "--n", 30, "--p", 0.2, "--seed", 1, "--out", out)
    assert out.read_bytes() == first


def test_sigma_sweep(tmp_path, config, capsys):
    code, stdout, _ = run(capsys, "sigma-sweep", "--config", config, "--out", tmp_path / "o")
    assert code == 0
    assert json.loads(stdout)["rows"] == 4
    lines = (tmp_path / "o" / "sigma_sweep.csv").read_text().splitlines()
    assert lines[0].startswith("row,model,graph,shift,n_bar") and lines[0].endswith(",error")
    assert len(lines) == 5


def test_sweep_writes_rows_and_trajectories(tmp_path, config, capsys):
    code, stdout, _ = run(capsys, "sweep", "--config", config, "--out", tmp_path / "o")
    assert code == 0
    info = json.loads(stdout)
    assert info["rows"] == 4 and info["errors"] == 0 and info["bound_violations"] == 0
    files = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert files == ["convergence_sweep.csv"] + [f"trajectory_{i:03d}.csv" for i in range(4)]


def test_sweep_flags_override_config(tmp_path, config, capsys):
    code, _, _ = run(capsys, "sweep", "--config", config, "--out", tmp_path / "o", "--shift", "lap",
                     "--model", "knn", "--n", 24, "--k", 4)
    assert code == 0
    lines = (tmp_path / "o" / "convergence_sweep.csv").read_text().splitlines()
    assert len(lines) == 3
    assert all(",knn,n=24;k=4,lap," in line for line in lines[1:])


def test_train_and_predict(tmp_path, config, capsys):
    code, stdout, _ = run(capsys, "train", "--config", config, "--out", tmp_path / "t")
    assert code == 0
    info = json.loads(stdout)
    report = json.loads((tmp_path / "t" / "init_report.json").read_text())
    assert report["valid"] is True and info["init_valid"] is True
    assert info["bound_ok"] is True
    header = (tmp_path / "t" / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,loss,rel_loss")

    code, stdout, _ = run(capsys, "predict", "--config", config)
    assert code == 0
    pred = json.loads(stdout)
    assert pred["a"] == pytest.approx(pred["min_admissible_a"])
    assert pred["rate_bundle"]["alpha_lower"] == pytest.approx(report["alpha_lower"])
    assert pred["iterations_to_epsilon"] >= 1
    assert pred["energy_min_value"] > 0


def test_outputs_are_byte_identical(tmp_path, config, capsys):
    for name in ("a", "b"):
        assert run(capsys, "sweep", "--config", config, "--out", tmp_path / name, "--jobs", 2)[0] == 0
        assert run(capsys, "train", "--config", config, "--out", tmp_path / name / "t")[0] == 0
    for f in sorted((tmp_path / "a").rglob("*.*")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_verify_passes(capsys):
    code, stdout, _ = run(capsys, "verify")
    assert code == 0
    assert json.loads(stdout)["failed"] == []


@pytest.mark.parametrize("argv,code", [
    (["--bogus"], 2),
    (["sweep", "--bogus"], 2),
    (["sweep"], 2),
    (["gen-graph", "--model", "er", "--n", "10"], 2),
    (["sweep", "--config", "/nonexistent/cfg.json"], 1),
])
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


def test_runtime_error_is_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, stdout, stderr = run(capsys, "predict", "--config", bad)
    assert code == 1 and stdout == ""
    err = json.loads(stderr.strip().splitlines()[-1])
    assert err["error"] == "ParseError" and err["command"] == "predict"
