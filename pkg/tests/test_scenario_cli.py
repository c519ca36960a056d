import copy
import csv
import json

import numpy as np
import pytest

from lcvx.cli import EXIT_ASSUMPTION, EXIT_OK, EXIT_SCENARIO, main
from lcvx.exceptions import AssumptionError, ScenarioError
from lcvx.pipeline import Branch, emit_outputs, long_horizon_setup, run_pipeline, run_sweep
from lcvx.scenario import BUNDLED, bundled_path, load_bundled, parse_scenario


@pytest.fixture
def moon60_dict():
    return json.loads(bundled_path("example1").read_text())


@pytest.fixture(scope="module")
def moon60_report():
    return run_pipeline(load_bundled("example1"))


@pytest.fixture(scope="module")
def moon200_report():
    return run_pipeline(load_bundled("example3"))


def test_bundled_scenarios_parse():
    for key in BUNDLED:
        sc = load_bundled(key)
        assert sc.N >= 10


def test_thrust_limits_become_acceleration_bounds(moon60):
    assert (moon60.rho_min, moon60.rho_max) == (2.25, 6.0)
    assert moon60.continuous and moon60.time_weighted


def test_discrete_defaults(artificial):
    assert not artificial.continuous
    assert artificial.t_f == 10.0
    assert not artificial.time_weighted
    np.testing.assert_array_equal(artificial.perturbation.q, [1e-7, 0.0, 0.0])


def test_optional_sections_have_defaults(moon60_dict):
    for key in ("cost", "perturbation", "solver", "analysis", "description"):
        moon60_dict.pop(key)
    sc = parse_scenario(moon60_dict)
    assert sc.cost.running == 1.0 and sc.time_weighted
    assert sc.perturbation.epsilon == 1e-7 and sc.perturbation.seed == 0
    assert sc.settings.tol_p == 1e-9 and sc.backend == "bundled"
    assert sc.tol_v == 1e-6 and sc.tol_c == 1e-6
    assert sc.long_horizon.eps_t == 1e-2


def test_missing_rho_min(moon60_dict):
    moon60_dict["control"] = {"g_kind": "NORM2", "rho_max": 6.0}
    with pytest.raises(ScenarioError, match="rho_min"):
        parse_scenario(moon60_dict)


def test_missing_section(moon60_dict):
    del moon60_dict["horizon"]
    with pytest.raises(ScenarioError, match="missing required field"):
        parse_scenario(moon60_dict)


def test_unknown_key(moon60_dict):
    moon60_dict["cost"]["runing"] = 2.0
    with pytest.raises(ScenarioError, match="runing"):
        parse_scenario(moon60_dict)


def test_both_plant_forms_rejected(moon60_dict):
    moon60_dict["plant"]["discrete"] = {"A": [[1.0]], "B": [[1.0]]}
    with pytest.raises(ScenarioError):
        parse_scenario(moon60_dict)


def test_wrong_initial_state_length(moon60_dict):
    moon60_dict["initial_state"] = [0, 0, 5000]
    with pytest.raises(ScenarioError, match="initial_state"):
        parse_scenario(moon60_dict)


def test_phase_one_control_off_level(moon60_dict):
    moon60_dict["long_horizon"] = {"u_s": [0, 0, 2.0]}
    with pytest.raises(ScenarioError, match="u_s"):
        parse_scenario(moon60_dict)


def test_bad_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"name": "x",\n  "plant": }\n')
    with pytest.raises(ScenarioError, match="line 2, column"):
        parse_scenario(path)


def test_unreadable_path(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        parse_scenario(tmp_path / "nope.json")


def test_overrides(moon60, artificial):
    sc = moon60.with_overrides(seed=3, eps_q=1e-6, eps_t=0.5, tol=1e-8)
    assert sc.perturbation.seed == 3 and sc.perturbation.epsilon == 1e-6
    assert sc.long_horizon.eps_t == 0.5 and sc.settings.tol_g == 1e-8
    # an explicit q is a fixed experiment; a new seed means sampling instead
    assert artificial.with_overrides(seed=1).perturbation.q is None
    assert artificial.with_overrides().perturbation.q is not None


def test_normal_branch(moon60_report):
    rep = moon60_report
    assert rep.branch is Branch.NORMAL
    assert rep.violation_count == 1 and rep.bound == 5
    assert rep.objective == pytest.approx(220.9245037, rel=1e-8)
    assert rep.correction["final_state_deviation"] <= rep.correction["bound"]
    assert rep.correction["within_bound"]


def test_perturbed_branch(artificial):
    rep = run_pipeline(artificial)
    assert rep.branch is Branch.NORMAL_PERTURBED
    p = rep.perturbation
    assert p["violations_before"] == 3 and rep.violation_count <= 2
    assert p["boundary_residual_true_dynamics"] <= 1e-4
    assert p["q_source"] == "scenario"


def test_long_horizon_branch(moon200_report):
    rep = moon200_report
    assert rep.branch is Branch.LONG_HORIZON
    assert rep.classification["initial"]["kind"] == "LONG_HORIZON"
    assert rep.classification["final"]["kind"] == "NORMAL"
    t_s = rep.bisection["t_s_star"]
    assert 98.0 < t_s < 98.5
    assert rep.per_node[0]["t"] == pytest.approx(t_s)


def test_long_horizon_needs_continuous_plant(artificial):
    with pytest.raises(AssumptionError):
        long_horizon_setup(artificial)


def test_emit_outputs(moon60_report, tmp_path):
    paths = emit_outputs(moon60_report, tmp_path)
    assert {p.name for p in paths} == {"report.json", "trajectory.csv", "plotdata.csv",
                                       "timing.json"}
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    assert rows[-1]["u1"] == "" and rows[0]["x3"] == "5000.0"
    assert float(rows[-1]["t"]) == 60.0
    with open(tmp_path / "plotdata.csv") as fh:
        plot = list(csv.DictReader(fh))
    assert len(plot) == 10
    assert {float(r["rho_min"]) for r in plot} == {2.25}
    assert {float(r["rho_max"]) for r in plot} == {6.0}
    # the corrected control sits on the lower level set
    assert float(plot[2]["corrected_norm"]) == pytest.approx(2.25)
    report = json.loads((tmp_path / "report.json").read_text())
    assert "wall_time_s" not in report
    assert "wall_time_s" in json.loads((tmp_path / "timing.json").read_text())


def test_report_is_byte_identical(artificial, tmp_path):
    sc = artificial.with_overrides(seed=11)
    a = emit_outputs(run_pipeline(sc), tmp_path / "a")[0].read_bytes()
    b = emit_outputs(run_pipeline(sc), tmp_path / "b")[0].read_bytes()
    assert a == b


def test_report_json_has_no_non_finite_values(moon200_report):
    text = moon200_report.to_json()
    assert "NaN" not in text and "Infinity" not in text


def test_sweep_is_independent_of_jobs(moon60):
    a = run_sweep(moon60, (10, 30), jobs=1)
    b = run_sweep(moon60, (10, 30), jobs=2)
    strip = [{k: v for k, v in r.items() if k != "wall_time_s"} for r in a]
    assert strip == [{k: v for k, v in r.items() if k != "wall_time_s"} for r in b]
    assert [r["N"] for r in a] == [10, 30]
    assert a[0]["violation_count"] == 1


def test_cli_validate_ok(capsys):
    assert main(["validate", "--scenario", str(bundled_path("example1"))]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_cli_scenario_error(tmp_path, moon60_dict, capsys):
    bad = copy.deepcopy(moon60_dict)
    del bad["horizon"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["solve", "--scenario", str(path)]) == EXIT_SCENARIO
    assert "missing required field" in capsys.readouterr().err


def test_cli_bisect_without_phase_one_control(capsys):
    assert main(["bisect", "--scenario", str(bundled_path("example1"))]) == EXIT_ASSUMPTION
    assert "u_s" in capsys.readouterr().err


def test_cli_bisect_on_normal_instance_is_assumption_failure(tmp_path, moon60_dict, capsys):
    moon60_dict["long_horizon"] = {"u_s": [0, 0, 2.25]}
    path = tmp_path / "moon60_lh.json"
    path.write_text(json.dumps(moon60_dict))
    assert main(["bisect", "--scenario", str(path)]) == EXIT_ASSUMPTION
    assert "already normal" in capsys.readouterr().err


def test_cli_bisect_writes_trace(tmp_path, capsys):
    code = main(["bisect", "--scenario", str(bundled_path("example3")), "--out", str(tmp_path),
                 "--eps-t", "1.0"])
    assert code == EXIT_OK
    trace = json.loads((tmp_path / "bisection.json").read_text())
    assert trace["bisection"]["certificate"]["kind"] == "NORMAL"
    assert 97.0 < trace["bisection"]["t_s_star"] < 99.5
    capsys.readouterr()


def test_cli_solve_writes_outputs(tmp_path, capsys):
    code = main(["solve", "--scenario", str(bundled_path("example2")), "--out", str(tmp_path),
                 "--seed", "4", "--eps-q", "1e-6"])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["seed"] == 4
    assert report["perturbation"]["epsilon"] == 1e-6
    assert report["perturbation"]["q_source"] == "sampled"
    capsys.readouterr()


def test_cli_reproduce_example1(tmp_path, capsys):
    assert main(["reproduce", "example1", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 3


def test_cli_sweep(tmp_path, capsys):
    code = main(["sweep-N", "--scenario", str(bundled_path("example1")), "--out", str(tmp_path),
                 "--n-values", "10", "30"])
    assert code == EXIT_OK
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["N"] for r in rows] == ["10", "30"]
    capsys.readouterr()
