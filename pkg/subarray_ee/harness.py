"""
Seeded Monte Carlo runner: channel -> analog stage -> digital stage per trial,
swept over the transmit power grid, summarized with pandas.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .analog_stage import ConvergenceTrace, alternate_analog
from .channel_model import derive_trial_seed, generate_channel, make_rng
from .config import ExperimentConfig
from .digital_stage import (
    dinkelbach_solve,
    effective_channel,
    energy_efficiency_nats,
    fully_digital_solve,
)
from .errors import NumericFailureError, OutputError
from .metrics import Architecture, Metrics, dbm_to_watts

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "power_dbm",
    "solver",
    "mean_energy_efficiency",
    "mean_energy_efficiency_nats",
    "mean_rate",
    "mean_consumed_power",
    "mean_transmit_power",
    "trials",
    "failures",
]

TRACE_COLUMNS = [
    "trial_seed",
    "stage",
    "loop",
    "iteration",
    "value",
    "power_dbm",
    "outer_iteration",
]


@dataclass
class SolverRun:
    """One solver at one power point of one trial; ``metrics`` is None if it failed."""

    solver: str
    power_dbm: float
    metrics: Optional[Dict[str, float]] = None
    energy_efficiency_nats: Optional[float] = None
    lambda_ee: float = 0.0
    converged: bool = False
    inner_traces: List[ConvergenceTrace] = field(default_factory=list)
    outer_trace: List[Tuple[float, float]] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.metrics is None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["inner_traces"] = [t.to_dict() for t in self.inner_traces]
        data["outer_trace"] = [list(p) for p in self.outer_trace]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SolverRun":
        return cls(
            solver=data["solver"],
            power_dbm=data["power_dbm"],
            metrics=data["metrics"],
            energy_efficiency_nats=data["energy_efficiency_nats"],
            lambda_ee=data["lambda_ee"],
            converged=data["converged"],
            inner_traces=[ConvergenceTrace.from_dict(t) for t in data["inner_traces"]],
            outer_trace=[tuple(p) for p in data["outer_trace"]],
            diagnostics=list(data["diagnostics"]),
        )


@dataclass
class TrialRecord:
    """Channel, analog stage and every solver run of one seeded trial."""

    trial_index: int
    trial_seed: int
    config_hash: str
    channel_norm_sq: float
    analog_trace: Optional[ConvergenceTrace] = None
    analog_gains: Dict[str, float] = field(default_factory=dict)
    subarray_traces: List[dict] = field(default_factory=list)
    runs: List[SolverRun] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "trial_seed": self.trial_seed,
            "config_hash": self.config_hash,
            "channel_norm_sq": self.channel_norm_sq,
            "analog_trace": None if self.analog_trace is None else self.analog_trace.to_dict(),
            "analog_gains": self.analog_gains,
            "subarray_traces": self.subarray_traces,
            "runs": [r.to_dict() for r in self.runs],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrialRecord":
        analog = data.get("analog_trace")
        return cls(
            trial_index=data["trial_index"],
            trial_seed=data["trial_seed"],
            config_hash=data["config_hash"],
            channel_norm_sq=data["channel_norm_sq"],
            analog_trace=None if analog is None else ConvergenceTrace.from_dict(analog),
            analog_gains=dict(data.get("analog_gains", {})),
            subarray_traces=list(data.get("subarray_traces", [])),
            runs=[SolverRun.from_dict(r) for r in data["runs"]],
            diagnostics=list(data.get("diagnostics", [])),
        )


def effective_gains(entries: np.ndarray, initial_leakage: float) -> Dict[str, float]:
    """
    Split ``|H~|_F^2`` into the stream gains on the diagonal (``signal``) and
    the off-diagonal leakage left by the analog stage.
    """
    power = np.abs(entries) ** 2
    signal = float(np.trace(power))
    return {
        "signal": signal,
        "leakage": float(power.sum()) - signal,
        "initial_leakage": float(initial_leakage),
    }


def _metrics_row(metrics: Metrics) -> Dict[str, float]:
    return {k: float(v) for k, v in metrics.to_dict().items()}


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialRecord:
    """
    Run every configured solver on one channel realization.

    The channel is drawn first from the trial generator and the analog
    transmit phases next, so a digital-only config sees the same channels.
    The analog stage does not depend on the power budget and runs once.
    """
    seed = derive_trial_seed(cfg.base_seed, trial_index)
    rng = make_rng(seed)
    H = generate_channel(cfg.dims, cfg.cluster, rng)
    noise = dbm_to_watts(cfg.noise_dbm)
    record = TrialRecord(
        trial_index=trial_index,
        trial_seed=seed,
        config_hash=cfg.config_hash(),
        channel_norm_sq=H.frobenius_norm_sq(),
    )

    eff = None
    if Architecture.HYBRID in cfg.solvers:
        analog = alternate_analog(
            H, rng, eps=cfg.eps, max_outer=cfg.max_outer_analog, max_sweeps=cfg.max_sweeps
        )
        record.analog_trace = analog.trace
        record.subarray_traces = [
            {
                "outer_iteration": s.outer_iteration,
                "side": s.side.value,
                "subarray": s.subarray,
                "values": [float(v) for v in s.trace.values],
                "capped": s.trace.capped,
            }
            for s in analog.subarray_traces
        ]
        if analog.trace.capped:
            record.diagnostics.append(f"seed={seed}: analog alternation hit the outer cap")
        if any(s.trace.capped for s in analog.subarray_traces):
            record.diagnostics.append(f"seed={seed}: analog sub-array sweep hit the cap")
        eff = effective_channel(H, analog.transmit, analog.receive, noise)
        record.analog_gains = effective_gains(eff.entries, analog.initial_total)

    solver_kwargs = dict(
        eps=cfg.eps,
        mode=cfg.mode,
        max_outer=cfg.max_outer_dinkelbach,
        max_inner=cfg.max_inner,
        bisection_tol=cfg.bisection_tol,
    )
    for p_dbm in cfg.power_grid_dbm:
        P = dbm_to_watts(p_dbm)
        for solver in cfg.solvers:
            run = SolverRun(solver=Architecture(solver).value, power_dbm=float(p_dbm))
            try:
                if Architecture(solver) is Architecture.HYBRID:
                    sol = dinkelbach_solve(eff, P, cfg.power_model, **solver_kwargs)
                else:
                    sol = fully_digital_solve(H, P, cfg.power_model, noise, **solver_kwargs)
            except NumericFailureError as e:
                msg = f"seed={seed} solver={run.solver} P={p_dbm:g}dBm: {e}"
                logger.warning("trial %d failed: %s", trial_index, msg)
                run.diagnostics.append(msg)
                record.runs.append(run)
                continue
            run.metrics = _metrics_row(sol.metrics)
            run.energy_efficiency_nats = energy_efficiency_nats(sol.metrics)
            run.lambda_ee = float(sol.state.lambda_ee)
            run.converged = sol.state.converged
            run.inner_traces = sol.inner_traces
            run.outer_trace = [(float(a), float(b)) for a, b in sol.state.outer_trace]
            run.diagnostics = [f"seed={seed}: {d}" for d in sol.diagnostics]
            record.runs.append(run)
    return record


def run_sweep(
    cfg: ExperimentConfig,
    progress: Optional[Callable[[TrialRecord], None]] = None,
) -> Tuple[List[TrialRecord], pd.DataFrame]:
    """All trials of ``cfg``, in up to ``cfg.threads`` workers; records come back sorted."""
    indices = range(cfg.trials)

    def _one(i):
        record = run_trial(cfg, i)
        if progress is not None:
            progress(record)
        return record

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            records = list(pool.map(_one, indices))
    else:
        records = [_one(i) for i in indices]
    records.sort(key=lambda r: r.trial_index)
    return records, summarize(records)


def summarize(records: List[TrialRecord]) -> pd.DataFrame:
    """Per (power_dbm, solver) means over the trials that did not fail."""
    rows = []
    for record in records:
        for run in record.runs:
            row = {"power_dbm": run.power_dbm, "solver": run.solver, "failed": run.failed}
            if not run.failed:
                row.update(
                    energy_efficiency=run.metrics["energy_efficiency"],
                    energy_efficiency_nats=run.energy_efficiency_nats,
                    rate=run.metrics["rate_bits"],
                    consumed_power=run.metrics["consumed_power"],
                    transmit_power=run.metrics["transmit_power"],
                )
            rows.append(row)
    if not rows:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)

    df = pd.DataFrame(rows)
    for col in ("energy_efficiency", "energy_efficiency_nats", "rate", "consumed_power", "transmit_power"):
        if col not in df:
            df[col] = np.nan
    grouped = df.groupby(["power_dbm", "solver"], sort=True)
    summary = grouped.agg(
        mean_energy_efficiency=("energy_efficiency", "mean"),
        mean_energy_efficiency_nats=("energy_efficiency_nats", "mean"),
        mean_rate=("rate", "mean"),
        mean_consumed_power=("consumed_power", "mean"),
        mean_transmit_power=("transmit_power", "mean"),
        trials=("energy_efficiency", "count"),
        failures=("failed", "sum"),
    ).reset_index()
    summary["failures"] = summary["failures"].astype(int)
    return summary[SUMMARY_COLUMNS]


def traces_frame(records: List[TrialRecord]) -> pd.DataFrame:
    """Long-format traces; analog rows have no power point."""
    rows = []
    for record in records:
        seed = record.trial_seed
        if record.analog_trace is not None:
            for i, v in enumerate(record.analog_trace.values):
                rows.append((seed, "analog", "alternation", i, v, np.nan, np.nan))
        for run in record.runs:
            for outer, trace in enumerate(run.inner_traces):
                for i, v in enumerate(trace.values):
                    rows.append((seed, run.solver, "inner", i, v, run.power_dbm, outer))
            for i, (varpi, _) in enumerate(run.outer_trace):
                rows.append((seed, run.solver, "outer", i, varpi, run.power_dbm, np.nan))
    df = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    return df.astype({"outer_iteration": "Int64"})


def emit_outputs(
    records: List[TrialRecord],
    summary: pd.DataFrame,
    out_dir,
    cfg: Optional[ExperimentConfig] = None,
) -> Dict[str, Path]:
    """Write summary.csv, traces.csv, records.json and (given a config) config.json."""
    out_dir = Path(out_dir)
    paths = {
        "summary": out_dir / "summary.csv",
        "traces": out_dir / "traces.csv",
        "records": out_dir / "records.json",
    }
    if cfg is not None:
        paths["config"] = out_dir / "config.json"

    current = out_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
        current = paths["summary"]
        summary.to_csv(current, index=False)
        current = paths["traces"]
        traces_frame(records).to_csv(current, index=False)
        current = paths["records"]
        with open(current, "w") as f:
            json.dump([r.to_dict() for r in records], f, indent=1)
        if cfg is not None:
            current = paths["config"]
            with open(current, "w") as f:
                f.write(cfg.resolved_json())
    except OSError as e:
        raise OutputError(f"could not write {current}: {e}") from e

    logger.info("wrote %d records to %s", len(records), out_dir)
    return paths


def load_records(path) -> List[TrialRecord]:
    """Read a records.json written by ``emit_outputs`` back into TrialRecords."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise OutputError(f"could not read {path}: {e}") from e
    return [TrialRecord.from_dict(d) for d in data]
