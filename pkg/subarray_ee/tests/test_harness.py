import json

import numpy as np
import pandas as pd
import pytest

from subarray_ee.config import ExperimentConfig, load_config
from subarray_ee.errors import OutputError
from subarray_ee.harness import (
    SUMMARY_COLUMNS,
    TRACE_COLUMNS,
    effective_gains,
    emit_outputs,
    load_records,
    run_sweep,
    run_trial,
    summarize,
    traces_frame,
)


def test_single_trial_smoke(small_config):
    cfg = ExperimentConfig.model_validate(
        {**small_config.model_dump(), "solvers": ["hybrid"], "power_grid_dbm": [10.0]}
    )
    record = run_trial(cfg, 0)
    assert record.analog_trace is not None and record.analog_trace.iterations > 0
    assert len(record.runs) == 1
    run = record.runs[0]
    assert not run.failed
    assert run.inner_traces and run.inner_traces[0].iterations > 0
    assert record.config_hash == cfg.config_hash()


def test_trial_is_deterministic(small_config):
    assert run_trial(small_config, 1).to_dict() == run_trial(small_config, 1).to_dict()


def test_digital_only_config_sees_same_channel(small_config):
    digital = ExperimentConfig.model_validate(
        {**small_config.model_dump(), "solvers": ["fully_digital"]}
    )
    a = run_trial(small_config, 2)
    b = run_trial(digital, 2)
    assert a.channel_norm_sq == b.channel_norm_sq
    assert b.analog_trace is None
    digital_a = [r.to_dict() for r in a.runs if r.solver == "fully_digital"]
    assert digital_a == [r.to_dict() for r in b.runs]


def test_spectral_efficiency_mode_has_no_outer_trace(small_config):
    cfg = ExperimentConfig.model_validate(
        {**small_config.model_dump(), "mode": "spectral_efficiency"}
    )
    record = run_trial(cfg, 0)
    for run in record.runs:
        assert run.outer_trace == []
        assert run.lambda_ee == 0.0


def test_sweep_rows_and_means(small_config):
    records, summary = run_sweep(small_config)
    assert [r.trial_index for r in records] == [0, 1, 2]
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 2 * 2
    assert (summary["trials"] == 3).all()

    row = summary[(summary.power_dbm == 20.0) & (summary.solver == "hybrid")].iloc[0]
    ee = [
        run.metrics["energy_efficiency"]
        for r in records
        for run in r.runs
        if run.solver == "hybrid" and run.power_dbm == 20.0
    ]
    assert row.mean_energy_efficiency == pytest.approx(np.mean(ee), rel=1e-12)


def test_sweep_independent_of_threads(small_config):
    threaded = ExperimentConfig.model_validate({**small_config.model_dump(), "threads": 3})
    serial_records, serial_summary = run_sweep(small_config)
    threaded_records, threaded_summary = run_sweep(threaded)
    assert [r.to_dict() for r in serial_records] == [r.to_dict() for r in threaded_records]
    pd.testing.assert_frame_equal(serial_summary, threaded_summary)


def test_failed_runs_are_counted(small_config):
    records, _ = run_sweep(small_config)
    records[0].runs[0].metrics = None
    summary = summarize(records)
    first = records[0].runs[0]
    row = summary[(summary.power_dbm == first.power_dbm) & (summary.solver == first.solver)].iloc[0]
    assert row.failures == 1
    assert row.trials == 2


def test_empty_records_give_header_only_files(tmp_path):
    summary = summarize([])
    paths = emit_outputs([], summary, tmp_path)
    assert paths["summary"].read_text().strip() == ",".join(SUMMARY_COLUMNS)
    assert paths["traces"].read_text().strip() == ",".join(TRACE_COLUMNS)
    assert json.loads(paths["records"].read_text()) == []


def test_outputs_round_trip(small_config, tmp_path):
    records, summary = run_sweep(small_config)
    paths = emit_outputs(records, summary, tmp_path, small_config)
    reloaded = load_records(paths["records"])
    pd.testing.assert_frame_equal(summarize(reloaded), summary)
    assert load_config(paths["config"]) == small_config
    on_disk = pd.read_csv(paths["summary"])
    assert list(on_disk.columns) == SUMMARY_COLUMNS


def test_analog_trace_rows_replay_leakage(small_config):
    record = run_trial(small_config, 0)
    traces = traces_frame([record])
    analog = traces[traces.stage == "analog"].sort_values("iteration")
    assert (analog["loop"] == "alternation").all()
    values = analog["value"].tolist()
    assert values == record.analog_trace.values
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_trace_rows_for_digital_loops(small_config):
    record = run_trial(small_config, 0)
    traces = traces_frame([record])
    inner = traces[(traces.stage == "hybrid") & (traces["loop"] == "inner")]
    outer = traces[(traces.stage == "hybrid") & (traces["loop"] == "outer")]
    assert not inner.empty and not outer.empty
    assert set(inner.power_dbm) == {0.0, 20.0}
    assert (traces.trial_seed == record.trial_seed).all()


def test_emit_outputs_reports_path(tmp_path, small_config):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError, match="file"):
        emit_outputs([], summarize([]), blocker / "sub", small_config)


def test_load_records_missing_file(tmp_path):
    with pytest.raises(OutputError):
        load_records(tmp_path / "records.json")


def test_analog_gains_split_effective_channel(small_config):
    record = run_trial(small_config, 0)
    gains = record.analog_gains
    assert set(gains) == {"signal", "leakage", "initial_leakage"}
    assert gains["signal"] > 0
    assert gains["leakage"] == pytest.approx(record.analog_trace.values[-1], rel=1e-9, abs=1e-15)
    assert gains["initial_leakage"] >= record.analog_trace.values[0] - 1e-9


def test_effective_gains_of_known_matrix():
    gains = effective_gains(np.array([[1.0, 2j], [0.5, -3.0]]), 7.0)
    assert gains == pytest.approx({"signal": 10.0, "leakage": 4.25, "initial_leakage": 7.0})


@pytest.mark.slow
def test_digital_ahead_of_hybrid_with_costly_rf_chains():
    """
    32 antennas in 4 sub-arrays of 8, 430 mW RF chains: the fully-digital
    link is ahead at both ends of the grid and the hybrid closes the gap as
    the budget grows (about 0.06 of digital at -10 dBm, 0.5 at 40 dBm).
    """
    cfg = load_config(
        None,
        {
            "dims": {"n_subarrays": 4, "antennas_per_subarray": 8},
            "power_model": {"p_trfc": 0.43, "p_rrfc": 0.43},
            "power_grid_dbm": [-10.0, 40.0],
            "trials": 20,
            "threads": 4,
        },
    )
    _, summary = run_sweep(cfg)
    ee = summary.set_index(["power_dbm", "solver"])["mean_energy_efficiency"]
    low = ee[(-10.0, "hybrid")] / ee[(-10.0, "fully_digital")]
    high = ee[(40.0, "hybrid")] / ee[(40.0, "fully_digital")]
    assert low < 1.0
    assert high < 1.0
    assert high > low
