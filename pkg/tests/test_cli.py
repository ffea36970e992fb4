import json
import subprocess
import sys

import pytest

from ccvb.cli import parse_and_dispatch


def run(argv, capsys):
    code = parse_and_dispatch(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def dataset(tmp_path, capsys):
    code, _, _ = run(["simulate", "--n", "400", "--seed", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    return tmp_path / "dataset.csv"


def test_simulate(dataset):
    lines = dataset.read_text().splitlines()
    assert lines[0] == "T,S,E" and len(lines) == 401


def test_simulate_prints_json(tmp_path, capsys):
    code, out, _ = run(["simulate", "--n", "5", "--out", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["rows"] == 5


@pytest.mark.parametrize("method", ["mle", "bayes-cc", "avg-constraint"])
def test_staff(dataset, capsys, method):
    code, out, _ = run(["staff", "--data", str(dataset), "--method", method, "--mc-draws", "5000"], capsys)
    payload = json.loads(out)
    assert code == 0
    assert payload["method"] == method.replace("-", "_")
    assert {"c", "constraint_prob_at_c", "n"} <= set(payload)
    if method == "bayes-cc":
        assert payload["constraint_prob_at_c"] >= 0.95
        assert "lambda_posterior" in payload


def test_staff_writes_file(dataset, tmp_path, capsys):
    code, out, _ = run(["staff", "--data", str(dataset), "--out", str(tmp_path / "s")], capsys)
    assert code == 0
    assert json.loads((tmp_path / "s" / "staffing.json").read_text()) == json.loads(out)


def test_staff_infeasible_exit_1(dataset, capsys):
    code, _, err = run(["staff", "--data", str(dataset), "--method", "mle", "--c-max", "2"], capsys)
    assert code == 1 and "stability" in err


def test_bad_dataset_names_row(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("T,S,E\n1,1,2\n2,1.5,3\n")
    code, _, err = run(["staff", "--data", str(path)], capsys)
    assert code == 1 and "row 2" in err


def test_missing_dataset_exit_1(tmp_path, capsys):
    code, _, _ = run(["staff", "--data", str(tmp_path / "none.csv")], capsys)
    assert code == 1


def test_ac_demo(capsys, tmp_path):
    code, out, _ = run(["ac-demo", "--out", str(tmp_path)], capsys)
    payload = json.loads(out)
    assert code == 0
    assert payload["c_A"] == 0.0 and payload["violation_prob_A"] == 0.5
    assert abs(payload["c_CC"] - 1.281552) <= 1e-5
    assert (tmp_path / "ac_demo" / "summary.json").exists()


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["simulate", "--bogus"], ["staff"],
                                  ["simulate", "--n", "0"], ["ac-demo", "--beta", "1.5"],
                                  ["staff", "--data", "x.csv", "--alpha", "1.0"],
                                  ["table1", "--replications", "0"],
                                  ["regions", "--resolution", "1"]])
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2 and err


def test_malformed_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n "seed": 1,\n "replications": oops\n}')
    code, _, err = run(["table1", "--config", str(cfg)], capsys)
    assert code == 2 and "line 3" in err


def test_unknown_config_field_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"colour": 1}')
    code, _, err = run(["decay", "--config", str(cfg)], capsys)
    assert code == 2 and "colour" in err


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"replications": 2, "n_grid": [30], "mc_draws": 1000, "seed": 5,
                               "output_dir": str(tmp_path / "from_config")}))
    code, out, _ = run(["table1", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "flags")], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "flags" / "table1" / "summary.json").read_text())
    config = summary["metadata"]["config"]
    # flags beat the file, the file beats the defaults
    assert config["seed"] == 9 and config["replications"] == 2 and config["n_grid"] == [30]
    assert config["alpha"] == 0.37
    assert not (tmp_path / "from_config").exists()


def test_decay_feasible_c_exit_2(tmp_path, capsys):
    code, _, err = run(["decay", "--c-infeasible", "6", "--out", str(tmp_path)], capsys)
    assert code == 2 and "c_infeasible=6" in err


def test_sweeps_run(tmp_path, capsys):
    common = ["--replications", "2", "--mc-draws", "1000", "--out", str(tmp_path)]
    assert run(["consistency", "--n-grid", "50", "100", *common], capsys)[0] == 0
    assert run(["decay", "--n-grid", "50", "100", *common], capsys)[0] == 0
    assert (tmp_path / "consistency" / "rows.csv").exists()
    assert (tmp_path / "decay" / "summary.json").exists()


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit) as info:
        parse_and_dispatch(["table1", "--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    assert "(default: 100)" in out and "(default: 0.37)" in out
    with pytest.raises(SystemExit):
        parse_and_dispatch(["regions", "--help"])
    assert "default: 8000" in capsys.readouterr().out


def test_regions_small(tmp_path, capsys):
    argv = ["regions", "--steps", "2000", "--burn-in", "500", "--resolution", "31", "--probe-trials", "2000",
            "--repeats", "2", "--out", str(tmp_path)]
    code, out, _ = run(argv, capsys)
    assert code == 0
    payload = json.loads(out)
    assert [p["panel"] for p in payload["panels"]] == ["A", "B", "C", "D"]
    assert payload["nonconvexity"]["repetitions"] == 2
    assert (tmp_path / "fig1" / "panel_D.svg").exists()
    assert (tmp_path / "fig1" / "nonconvexity.json").exists()


def test_byte_identical_outputs(tmp_path, capsys):
    for sub in ("a", "b"):
        out = str(tmp_path / sub)
        assert run(["simulate", "--n", "50", "--seed", "3", "--out", out], capsys)[0] == 0
        assert run(["table1", "--replications", "2", "--n-grid", "50", "--mc-draws", "1000", "--out", out],
                   capsys)[0] == 0
    for rel in ("dataset.csv", "table1/summary.json", "table1/rows.csv"):
        a = (tmp_path / "a" / rel).read_bytes()
        b = (tmp_path / "b" / rel).read_bytes()
        out_a = a.replace(str(tmp_path / "a").encode(), b"")
        out_b = b.replace(str(tmp_path / "b").encode(), b"")
        assert out_a == out_b, rel


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ccvb", "ac-demo", "--beta", "0.5"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["c_CC"] == 0.0
    proc = subprocess.run([sys.executable, "-m", "ccvb", "nope"], capture_output=True, text=True, check=False)
    assert proc.returncode == 2
