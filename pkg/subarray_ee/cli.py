"""
Command-line entry point: ``run`` (power sweep), ``trial`` (one seed, all
traces) and ``check`` (invariant suite).
"""

import argparse
import logging
import sys
import time
from pathlib import Path

from dotenv import load_dotenv

from .checks import InvariantChecker, save_report
from .config import ENV_LOG_LEVEL, ENV_OUT_DIR, ENV_THREADS, env_default, load_config
from .digital_stage import Mode
from .errors import SubarrayEEError
from .harness import emit_outputs, run_sweep, run_trial, summarize

MODE_FLAGS = {"ee": Mode.ENERGY_EFFICIENCY.value, "se": Mode.SPECTRAL_EFFICIENCY.value}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate.py",
        description="Energy-efficient hybrid precoding simulations for sub-connected mmWave transceivers.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        default=env_default(ENV_LOG_LEVEL, "WARNING"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level for the solver modules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Experiment config (JSON). Defaults apply when omitted.")
    common.add_argument("--seed", type=int, default=None, help="Base seed (overrides the config).")
    common.add_argument("--mode", choices=sorted(MODE_FLAGS), default=None, help="ee or se objective.")
    common.add_argument(
        "--out",
        default=env_default(ENV_OUT_DIR, "evaluation/results"),
        help="Output directory.",
    )

    run = sub.add_parser(
        "run", parents=[common], help="Run the Monte Carlo power sweep.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    run.add_argument("--trials", type=int, default=None, help="Number of channel realizations.")
    run.add_argument(
        "--threads",
        type=int,
        default=env_default(ENV_THREADS, None, int),
        help="Worker threads for independent trials.",
    )

    trial = sub.add_parser(
        "trial", parents=[common], help="Run one trial and print every trace.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    trial.add_argument("--index", type=int, default=0, help="Trial index within the base seed.")

    check = sub.add_parser(
        "check", parents=[common], help="Run the invariant suite.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    check.add_argument("--seeds", type=int, default=100, help="Number of seeded trials to check.")
    check.add_argument("--instances", type=int, default=1000, help="Random instances per identity check.")
    check.add_argument("--power-dbm", type=float, default=10.0, help="Transmit power for the solver checks.")
    check.add_argument(
        "--channel-normalization",
        action="store_true",
        help="Also average the channel norm over 10^4 draws.",
    )
    return parser


def _overrides(args) -> dict:
    return {
        "base_seed": args.seed,
        "mode": MODE_FLAGS.get(args.mode) if args.mode else None,
        "trials": getattr(args, "trials", None),
        "threads": getattr(args, "threads", None),
    }


def cmd_run(args, cfg) -> int:
    print(f"Running {cfg.trials} trials x {len(cfg.power_grid_dbm)} power points")
    print(f"Solvers: {', '.join(s.value for s in cfg.solvers)}  mode: {cfg.mode.value}")
    start = time.time()
    done = []

    def progress(record):
        done.append(record.trial_index)
        if len(done) % 10 == 0 or len(done) == cfg.trials:
            print(f"  {len(done)}/{cfg.trials} trials ({time.time() - start:.1f}s)")

    records, summary = run_sweep(cfg, progress=progress)
    paths = emit_outputs(records, summary, args.out, cfg)

    print("\nSummary:")
    print(summary.to_string(index=False))
    for name, path in paths.items():
        print(f"{name}: {path}")
    failures = int(summary["failures"].sum()) if len(summary) else 0
    if failures:
        print(f"\nWarning: {failures} solver runs failed; see records.json diagnostics")
    return 0


def cmd_trial(args, cfg) -> int:
    record = run_trial(cfg, args.index)
    print(f"Trial {record.trial_index}  seed={record.trial_seed}  config={record.config_hash[:12]}")
    print(f"||H||_F^2 = {record.channel_norm_sq:.6g}")
    if record.analog_trace is not None:
        print("\nAnalog alternation (I_total):")
        for i, v in enumerate(record.analog_trace.values):
            print(f"  {i:3d}  {v:.10g}")
        g = record.analog_gains
        print(
            f"|H~|^2 split: signal={g['signal']:.6g} leakage={g['leakage']:.6g} "
            f"(leakage at start {g['initial_leakage']:.6g})"
        )
    for run in record.runs:
        print(f"\n[{run.solver} @ {run.power_dbm:g} dBm]")
        if run.failed:
            print("  failed")
        else:
            m = run.metrics
            print(
                f"  rate={m['rate_bits']:.6g} bits/s/Hz  P_con={m['consumed_power']:.6g} W  "
                f"EE={m['energy_efficiency']:.6g} bits/Hz/J ({run.energy_efficiency_nats:.6g} nats)"
            )
        for outer, trace in enumerate(run.inner_traces):
            values = " ".join(f"{v:.6g}" for v in trace.values)
            print(f"  inner[{outer}]: {values}")
        for i, (varpi, chi) in enumerate(run.outer_trace):
            print(f"  outer[{i}]: varpi={varpi:.8g} chi={chi:.4g}")
        for d in run.diagnostics:
            print(f"  ! {d}")
    for d in record.diagnostics:
        print(f"! {d}")

    out = Path(args.out) / f"trial_{record.trial_seed}"
    emit_outputs([record], summarize([record]), out, cfg)
    print(f"\nTraces written to {out}")
    return 0


def cmd_check(args, cfg) -> int:
    checker = InvariantChecker(
        cfg,
        seeds=range(args.seeds),
        random_instances=args.instances,
        power_dbm=args.power_dbm,
    )
    report = checker.run_all(include_channel_normalization=args.channel_normalization)
    path = save_report(report, args.out)

    print("\nInvariant checks:")
    for name, result in report["checks"].items():
        status = "PASS" if result["passed"] else "FAIL"
        print(f"  - {name}: {status} (cases={result['cases']}, worst={result['worst']:.3g})")
    print(f"\nReport saved to {path}")
    return 0 if report["passed"] else 1


COMMANDS = {"run": cmd_run, "trial": cmd_trial, "check": cmd_check}


def main(argv=None) -> int:
    load_dotenv()
    try:
        parser = build_parser()
    except SubarrayEEError as e:
        print(f"Error: {e}")
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except SubarrayEEError as e:
        print(f"Error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
