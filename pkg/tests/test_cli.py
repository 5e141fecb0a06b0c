import csv
import io
import json

import pytest

from ncsim import scenarios
from ncsim.cli import main
from ncsim.linalg import gamma_split


@pytest.fixture
def scenario_file(tmp_path):
    def make(case_id, **overrides):
        path = tmp_path / f"case_{case_id}.json"
        scenarios.save(scenarios.scenario_from_case(case_id, overrides=overrides or None), path)
        return str(path)
    return make


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_catalog(capsys):
    code, out, _ = _run(capsys, "catalog")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["case", "description", "model", "remarks"]
    assert len(rows) == 1 + 25  # 0a, 0b and 1-23
    assert [r[0] for r in rows[1:]] == list(scenarios.CATALOG)


def test_discretize(capsys, scenario_file):
    code, out, _ = _run(capsys, "discretize", scenario_file("0b"), "--tau", "0.04")
    assert code == 0
    lines = out.splitlines()
    g0 = lines.index("Gamma0 =")
    expected = gamma_split(scenarios.double_integrator(), 0.1, 0.04).gamma0
    assert [float(lines[g0 + 1]), float(lines[g0 + 2])] == pytest.approx(expected.ravel(), rel=1e-11)


def test_discretize_rejects_tau_outside_period(capsys, scenario_file):
    code, _, err = _run(capsys, "discretize", scenario_file("0b"), "--tau", "0.2")
    assert code == 2 and "--tau" in err


def test_simulate_csv(capsys, scenario_file, tmp_path):
    out_path = tmp_path / "trace.csv"
    code, _, _ = _run(capsys, "simulate", scenario_file("8"), "--steps", "20", "--seed", "3",
                      "--out", str(out_path))
    assert code == 0
    raw = out_path.read_bytes()
    assert raw.count(b"\r\n") == 21
    rows = list(csv.DictReader(io.StringIO(raw.decode())))
    assert len(rows) == 20 and rows[0]["k"] == "0"
    assert {"x_0", "x_1", "y_0", "u_computed_0", "u_applied_0", "tau_sc", "tau_ca", "tau_k",
            "gamma_sc", "gamma_ca"} <= set(rows[0])


def test_simulate_json(capsys, scenario_file):
    code, out, _ = _run(capsys, "simulate", scenario_file("1"), "--steps", "5", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert len(doc["records"]) == 5
    assert doc["summary"]["case_id"] == "1" and doc["summary"]["diverged_at"] is None


def test_simulate_reports_divergence(capsys, scenario_file):
    path = scenario_file("0a", gain=scenarios.FixedGain([[-5.0, -5.0]]))
    code, out, err = _run(capsys, "simulate", path, "--steps", "2000")
    assert code == 0 and "diverged_at=" in err


def test_montecarlo(capsys, scenario_file):
    code, out, _ = _run(capsys, "montecarlo", scenario_file("14"), "--trials", "3", "--steps", "20")
    doc = json.loads(out)
    assert code == 0
    assert doc["trials"] == 3 and doc["total_steps"] == 60 and len(doc["mean_norm"]) == 21


def test_stability(capsys, scenario_file):
    code, out, _ = _run(capsys, "stability", scenario_file("0b"), "--tau-grid", "0:0.1:0.025")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["tau", "spectral_radius", "unstable"]
    assert [float(r[0]) for r in rows[1:]] == pytest.approx([0, 0.025, 0.05, 0.075, 0.1])
    assert all(r[2] in ("0", "1") for r in rows[1:])


@pytest.mark.parametrize("grid", ["0:0.5:0.1", "a:b:c", "0:0.1:0"])
def test_stability_rejects_bad_grid(capsys, scenario_file, grid):
    code, _, err = _run(capsys, "stability", scenario_file("0b"), "--tau-grid", grid)
    assert code == 2 and err.startswith("error:")


def test_template_round_trips(capsys, tmp_path):
    out_path = tmp_path / "t.json"
    assert _run(capsys, "template", "12", "--out", str(out_path))[0] == 0
    assert scenarios.load(out_path).case_id == "12"


def test_invalid_scenario_lists_every_violation(capsys, tmp_path):
    doc = scenarios.to_dict(scenarios.scenario_from_case("5"))
    doc["loss"]["p_ca"] = 0.3
    doc["x0"] = [1.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, _, err = _run(capsys, "simulate", str(path), "--steps", "5")
    assert code == 2
    lines = err.strip().splitlines()
    assert "error: loss.p_ca: cases 5-13 require lossless CA link" in lines
    assert any(line.startswith("error: x0:") for line in lines)


def test_missing_file(capsys, tmp_path):
    path = tmp_path / "missing.json"
    code, _, err = _run(capsys, "simulate", str(path), "--steps", "5")
    assert code == 2 and str(path) in err


def test_nonpositive_steps(capsys, scenario_file):
    code, _, err = _run(capsys, "simulate", scenario_file("1"), "--steps", "0")
    assert code == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
