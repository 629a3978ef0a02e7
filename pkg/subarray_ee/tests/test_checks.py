import json
from dataclasses import replace

import pytest

from subarray_ee.checks import InvariantChecker, save_report
from subarray_ee.errors import OutputError


@pytest.fixture
def checker(small_config):
    return InvariantChecker(small_config, seeds=range(3), random_instances=20, power_dbm=10.0)


def test_circuit_arithmetic(checker):
    result = checker.check_circuit_arithmetic()
    assert result["passed"]
    assert result["cases"] == 2


def test_leakage_identity(checker):
    result = checker.check_leakage_identity()
    assert result["passed"], result
    assert result["cases"] == 20


def test_phase_update_grid(checker):
    assert checker.check_phase_update_grid()["passed"]


def test_rate_mse_duality(checker):
    result = checker.check_rate_mse_duality()
    assert result["passed"], result


def test_structural_identities(checker):
    result = checker.check_structural_identities()
    assert result["passed"], result
    assert result["cases"] == 2 * 3


def test_power_feasibility(checker):
    assert checker.check_power_feasibility()["passed"]


def test_power_feasibility_uses_the_solver_multiplier(checker):
    H, analog, eff, sol = checker._seeded_solutions()[0]
    bis = sol.bisection
    below_floor = replace(bis, floor=bis.mu_tilde + 1.0, active=False)
    checker._seeded_solutions()[0] = (H, analog, eff, sol._replace(bisection=below_floor))
    result = checker.check_power_feasibility()
    assert not result["passed"]
    assert result["worst"] > 1e-6


def test_analog_check_reports_settling(checker):
    result = checker.check_analog_monotone()
    assert 0.0 <= result["outstanding_after_10"] <= 0.01
    assert result["max_outer_iterations"] >= 1


def test_solver_traces_are_monotone(checker):
    analog = checker.check_analog_monotone()
    digital = checker.check_digital_monotone()
    assert analog["worst"] <= 1e-9
    assert digital["worst"] <= 1e-9
    assert digital["terminal_chi"] <= checker.cfg.eps


def test_seeded_solutions_are_cached(checker):
    assert checker._seeded_solutions() is checker._seeded_solutions()
    assert len(checker._seeded_solutions()) == 3


def test_run_all_report_shape(checker):
    report = checker.run_all()
    assert set(report["checks"]) == {
        "leakage_identity",
        "analog_monotone",
        "phase_update_grid",
        "digital_monotone",
        "rate_mse_duality",
        "power_feasibility",
        "structural_identities",
        "circuit_arithmetic",
    }
    assert report["seeds"] == 3
    assert report["config_hash"] == checker.cfg.config_hash()
    assert report["passed"] == all(r["passed"] for r in report["checks"].values())


def test_channel_normalization_is_opt_in(small_config):
    checker = InvariantChecker(small_config, seeds=[], random_instances=1)
    assert "channel_normalization" in checker.run_all(include_channel_normalization=True)["checks"]
    result = checker.results["channel_normalization"]
    assert result["cases"] == 10_000


def test_save_report(tmp_path):
    report = {"timestamp": "20260101_000000", "passed": True, "checks": {}}
    path = save_report(report, tmp_path / "reports")
    with open(path) as f:
        assert json.load(f) == report
    assert path.endswith("invariants_20260101_000000.json")


def test_save_report_unwritable(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        save_report({"timestamp": "t"}, blocker / "sub")
