import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cqlqg import __version__, cli
from cqlqg.model import ingest_model

from conftest import fixture_path


def run(tmp_path, *argv):
    out = tmp_path / "report.json"
    code = cli.main([str(a) for a in argv] + ["--report", str(out)])
    report = json.loads(out.read_text())
    assert report["exit_code"] == code
    return code, report


def write_model(tmp_path, raw, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def load(name):
    return json.loads(fixture_path(name).read_text())


# -- ingest --------------------------------------------------------------------


def test_missing_file_and_bad_json(tmp_path):
    code, rep = run(tmp_path, "verify", tmp_path / "nope.json")
    assert code == 2 and rep["error"] == "ParseError"
    bad = tmp_path / "bad.json"
    bad.write_text('{"dims": ')
    code, rep = run(tmp_path, "verify", bad)
    assert code == 2 and rep["error"] == "ParseError"


def test_odd_dimension_reports_field(tmp_path):
    raw = load("plant_only.json")
    raw["dims"]["n"] = 3
    code, rep = run(tmp_path, "verify", write_model(tmp_path, raw))
    assert code == 2 and rep["message"].startswith("dims.n")


def test_plant_exclusivity(tmp_path):
    raw = load("plant_only.json")
    raw["plant"]["A"] = np.zeros((2, 2)).tolist()
    code, rep = run(tmp_path, "verify", write_model(tmp_path, raw))
    assert code == 2 and "mutually exclusive" in rep["message"]


# -- verify --------------------------------------------------------------------


@pytest.mark.parametrize("name,expected", [
    ("luenberger_n2.json", 0), ("verify_pass.json", 0), ("zero_plant.json", 0),
    ("plant_only.json", 0), ("verify_fail.json", 3), ("unstable.json", 3),
])
def test_verify_fixtures(tmp_path, name, expected):
    code, rep = run(tmp_path, "verify", fixture_path(name))
    assert code == expected
    assert rep["status"] == ("pass" if expected == 0 else "fail")


def test_verify_reports_residuals(tmp_path):
    _, rep = run(tmp_path, "verify", fixture_path("verify_fail.json"))
    plant = rep["pr"]["plant"]
    assert not plant["passed"] and plant["residual1"] > 1e-8
    _, rep = run(tmp_path, "verify", fixture_path("plant_only.json"))
    assert rep["pr"]["controller"] is None


# -- synthesize ----------------------------------------------------------------


def test_synthesize_round_trip(tmp_path):
    out = tmp_path / "with_ctrl.json"
    code, rep = run(tmp_path, "synthesize", fixture_path("plant_only.json"), "--out", out)
    assert code == 0 and rep["stability"]["stabilizing"]
    assert rep["pr"]["controller"]["passed"]
    assert rep["constraint_residual"] <= 1e-8
    code, rep = run(tmp_path, "verify", out)
    assert code == 0 and rep["pr"]["closed_loop"]["passed"]
    code, rep = run(tmp_path, "cost", out)
    assert code == 0 and np.isfinite(rep["cost"]["V"]) and rep["cost"]["V"] >= 0


def test_synthesize_dimension_deficit(tmp_path):
    rng = np.random.default_rng(0)
    raw = {
        "dims": {"n": 6, "m1": 2, "m2": 2, "p1": 2, "p2": 2, "r": 1},
        "Theta1": np.kron(np.eye(3), [[0.0, 1.0], [-1.0, 0.0]]).tolist(),
        "plant": {"R1": np.eye(6).tolist(), "M1": rng.normal(size=(2, 6)).tolist(),
                  "L1": rng.normal(size=(2, 6)).tolist()},
    }
    code, rep = run(tmp_path, "synthesize", write_model(tmp_path, raw))
    assert code == 3 and rep["error"] == "DimensionDeficit"


def test_synthesize_zero_plant(tmp_path):
    code, rep = run(tmp_path, "synthesize", fixture_path("zero_plant.json"), "--budget", "0")
    assert np.array_equal(rep["gains"]["b"], np.zeros((2, 2)))
    assert np.array_equal(rep["gains"]["e"], np.zeros((2, 2)))
    # zero drift has a marginal spectrum, so no margin is achieved
    assert code == 3 and rep["status"] == "not_found"


# -- cost ----------------------------------------------------------------------


def test_cost_evaluations_agree(tmp_path):
    code, rep = run(tmp_path, "cost", fixture_path("luenberger_n2.json"))
    assert code == 0
    c = rep["cost"]
    assert len(c["evaluations"]) == 3 and c["max_rel_disagreement"] <= 1e-8
    assert c["block_max_rel_disagreement"] <= 1e-8
    assert c["block_evaluations"][0] == pytest.approx(c["V"], rel=1e-8)


def test_cost_zero_output(tmp_path):
    code, rep = run(tmp_path, "cost", fixture_path("zero_output.json"))
    assert code == 0 and rep["cost"]["V"] == 0.0


def test_cost_unstable_and_missing_controller(tmp_path):
    code, rep = run(tmp_path, "cost", fixture_path("unstable.json"))
    assert code == 4 and rep["error"] == "NotHurwitz"
    code, rep = run(tmp_path, "cost", fixture_path("plant_only.json"))
    assert code == 2 and rep["message"].startswith("controller")


# -- gradcheck -----------------------------------------------------------------


def test_gradcheck_fixture(tmp_path):
    code, rep = run(tmp_path, "gradcheck", fixture_path("optimize_n2.json"))
    assert code == 0 and rep["directions"] == 20 and rep["skipped_directions"] == 0
    assert rep["grad_error"] <= 1e-5 and rep["stationarity_error"] <= 1e-5
    assert "warning" not in rep


def test_gradcheck_zero_dirs(tmp_path):
    code, rep = run(tmp_path, "gradcheck", fixture_path("optimize_n2.json"), "--dirs", "0")
    assert code == 0 and rep["directions"] == 0 and rep["grad_error"] == 0.0


def test_gradcheck_large_step_warns(tmp_path):
    with pytest.warns(RuntimeWarning):
        code, rep = run(tmp_path, "gradcheck", fixture_path("optimize_n2.json"), "--step", "0.1")
    assert code == 0 and "warning" in rep


# -- optimize ------------------------------------------------------------------


def test_optimize_fixture(tmp_path):
    log = tmp_path / "log.csv"
    out = tmp_path / "opt.json"
    code, rep = run(tmp_path, "optimize", fixture_path("optimize_n2.json"), "--log", log,
                    "--out", out)
    assert code == 0 and rep["converged"] and rep["status"] == "converged"
    rows = list(csv.reader(log.open()))
    assert rows[0] == ["iter", "L", "V", "f_norm", "Rb_norm", "Re_norm"]
    assert len(rows) == rep["iterations"] + 2
    assert [int(r[0]) for r in rows[1:]] == list(range(rep["iterations"] + 1))
    merit = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(merit) <= 0)
    assert rep["stability"]["estimator_abscissa"] < 0
    assert rep["stability"]["controller_abscissa"] < 0
    assert rep["norms"]["f"] <= 1e-6
    # restarting from the stored controller needs no further steps
    code, again = run(tmp_path, "optimize", out)
    assert code == 0 and again["iterations"] == 0 and again["gains_origin"] == "controller"


def test_optimize_rejects_bad_tol(tmp_path):
    code, rep = run(tmp_path, "optimize", fixture_path("optimize_n2.json"), "--tol", "-1")
    assert code == 2 and rep["message"].startswith("--tol")


def test_optimize_budget_exhausted(tmp_path):
    code, rep = run(tmp_path, "optimize", fixture_path("optimize_n2.json"), "--max-iter", "1")
    assert code == 5 and rep["status"] == "not_converged"


# -- reproducibility -------------------------------------------------------------


def strip(rep):
    return {k: v for k, v in rep.items() if k != "wall_time"}


def test_runs_are_deterministic(tmp_path):
    args = ("synthesize", fixture_path("plant_only.json"), "--seed", "4")
    _, a = run(tmp_path, *args)
    _, b = run(tmp_path, *args)
    assert strip(a) == strip(b)
    _, c = run(tmp_path, "synthesize", fixture_path("plant_only.json"), "--seed", "5")
    assert c["inputs_digest"] != a["inputs_digest"]


def test_seed_precedence(tmp_path, monkeypatch):
    raw = load("plant_only.json")
    raw.pop("seed")
    path = write_model(tmp_path, raw)
    model = ingest_model(path)
    monkeypatch.delenv("CQLQG_SEED", raising=False)
    assert cli.resolve_seed(None, model) == 0
    monkeypatch.setenv("CQLQG_SEED", "9")
    assert cli.resolve_seed(None, model) == 9
    assert cli.resolve_seed(3, model) == 3
    _, rep = run(tmp_path, "synthesize", path)
    assert rep["seed"] == 9
    # a seed in the model wins over the environment
    assert cli.resolve_seed(None, ingest_model(fixture_path("plant_only.json"))) == 0
    monkeypatch.setenv("CQLQG_SEED", "-1")
    code, rep = run(tmp_path, "synthesize", path)
    assert code == 2 and rep["message"].startswith("CQLQG_SEED")


def test_version():
    out = subprocess.run([sys.executable, "-m", "cqlqg.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == f"cqlqg {__version__}"


def test_report_to_stdout(capsys):
    code = cli.main(["verify", str(fixture_path("luenberger_n2.json"))])
    rep = json.loads(capsys.readouterr().out)
    assert code == 0 and rep["command"] == "verify"
