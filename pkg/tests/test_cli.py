import csv
import subprocess
import sys

import pytest
import yaml

from deltacert.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main

from conftest import LAG_CONFIG


@pytest.fixture
def lag_path(tmp_path):
    p = tmp_path / "lag.yaml"
    p.write_text(LAG_CONFIG)
    return str(p)


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_certify_scalar_lag(capsys, lag_path, tmp_path):
    code, out, _ = _run(capsys, "certify", "--config", lag_path, "--out", str(tmp_path / "a"))
    assert code == EXIT_OK
    rep = yaml.safe_load(out)
    assert rep["verdict"] == "certified"
    assert rep["conditions"]["coupling"]["weights"] == [1.0]
    assert rep["conditions"]["coupling"]["lambda_max_K"] == -1.0
    assert (tmp_path / "a" / "report.yaml").read_text() == out


def test_positive_supply_not_certified(capsys, lag_path, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(LAG_CONFIG.replace("X: [[0, 0.5], [0.5, 0]]", "X: [[1, 0], [0, 1]]"))
    code, out, _ = _run(capsys, "certify", "--config", str(p))
    assert code == EXIT_OK
    rep = yaml.safe_load(out)
    assert rep["verdict"] == "not-certified"
    assert not rep["conditions"]["coupling"]["feasible"]


def test_report_is_deterministic(capsys, lag_path, tmp_path):
    for d in ("a", "b"):
        assert _run(capsys, "certify", "--config", lag_path, "--out", str(tmp_path / d), "--seed", "7")[0] == 0
    assert (tmp_path / "a" / "report.yaml").read_bytes() == (tmp_path / "b" / "report.yaml").read_bytes()


def test_usage_errors(capsys, lag_path, tmp_path):
    with pytest.raises(SystemExit) as ei:
        main(["certify", "--config", lag_path, "--threads", "0"])
    assert ei.value.code == EXIT_USAGE
    assert _run(capsys, "certify", "--config", str(tmp_path / "missing.yaml"))[0] == EXIT_USAGE
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as ei:
        main(["simulate", "--config", lag_path, "--events", "1:-2"])
    assert ei.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as ei:
        main(["simulate", "--config", lag_path, "--events", "1:1.1", "--no-events"])
    assert ei.value.code == EXIT_USAGE


def test_config_error_reports_location(capsys, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(LAG_CONFIG.replace("tau: 1.0", "tau: fast"))
    code, _, err = _run(capsys, "certify", "--config", str(p))
    assert code == EXIT_USAGE and "line 9, column 19" in err


def test_missing_section_is_usage_error(capsys, lag_path):
    code, _, err = _run(capsys, "calibrate", "--config", lag_path)
    assert code == EXIT_USAGE and "config error" in err


def test_numeric_failure(capsys, tmp_path):
    # y = x + u fed back as u = y: dg/du = 0, so no consistent initial u exists
    text = LAG_CONFIG.replace("type: linear_lag\n    params: {tau: 1.0, gain: 1.0}",
                              "type: linear\n    params: {A: [[-1]], B: [[0]], C: [[1]], D: [[1]]}")
    text = text.replace("coupling_matrix: [[1.0]]", "coupling_matrix: [[-1.0]]")
    p = tmp_path / "singular.yaml"
    p.write_text(text)
    code, _, err = _run(capsys, "simulate", "--config", str(p))
    assert code == EXIT_NUMERIC and "numeric failure" in err


def test_simulate_artifacts(capsys, lag_path, tmp_path):
    out = tmp_path / "sim"
    code, text, _ = _run(capsys, "simulate", "--config", lag_path, "--out", str(out), "--t-end", "0.5",
                         "--x0", "0.1")
    assert code == EXIT_OK
    rows = list(csv.reader(open(out / "trajectory.csv")))
    assert rows[0] == ["t", "x_1", "u_1"] and len(rows) == 52
    assert float(rows[-1][0]) == 0.5
    data = yaml.safe_load(text)
    assert data["predicate_fraction"] == 1.0


def test_roa_sweep_equilibria(capsys, lag_path, tmp_path):
    code, text, _ = _run(capsys, "roa", "--config", lag_path, "--out", str(tmp_path))
    assert code == EXIT_OK
    assert yaml.safe_load(text)["level"]["l_bar"] == 0.125  # S = 2 x^2 at x = -0.25
    header = next(csv.reader(open(tmp_path / "roa_points.csv")))
    assert header == ["x_1", "S", "predicate", "boundary"]
    assert _run(capsys, "sweep", "--config", lag_path, "--out", str(tmp_path))[0] == EXIT_OK
    header = next(csv.reader(open(tmp_path / "sweep.csv")))
    assert header == ["s", "x_star_1", "in_D1", "max_Re_lambda"]
    code, text, _ = _run(capsys, "equilibria", "--config", lag_path)
    eqs = yaml.safe_load(text)["equilibria"]
    assert len(eqs) == 1 and eqs[0]["classification"] == "stable"


def test_verify_commands(capsys, lag_path):
    code, text, _ = _run(capsys, "verify-device", "--config", lag_path, "--mode", "exact")
    assert code == EXIT_OK and "pass" in text
    code, text, _ = _run(capsys, "verify-coupling", "--config", lag_path)
    assert code == EXIT_OK and yaml.safe_load(text)["coupling"]["feasible"] is True


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "deltacert.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("deltacert ")
