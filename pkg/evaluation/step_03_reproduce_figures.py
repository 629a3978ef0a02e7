#!/usr/bin/env python3
"""
Run one of the experiment configs under evaluation/configs and save its
summary, traces and records under evaluation/results/<config>_<timestamp>.
"""

import os
import sys
from datetime import datetime
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from subarray_ee.config import load_config  # noqa: E402
from subarray_ee.errors import SubarrayEEError  # noqa: E402
from subarray_ee.harness import emit_outputs, run_sweep, traces_frame  # noqa: E402


def list_configs():
    """List all experiment configs in the configs directory."""
    configs_dir = Path(__file__).resolve().parent / "configs"
    if not configs_dir.exists():
        print("No configs directory found!")
        return []
    return sorted(configs_dir.glob("*.json"))


def ensure_results_dir():
    """Ensure the results directory exists"""
    results_dir = os.path.join(os.path.dirname(__file__), "results")
    os.makedirs(results_dir, exist_ok=True)
    return results_dir


def print_convergence(records):
    """Mean trace per loop, for configs with a single power point."""
    traces = traces_frame(records)
    if traces.empty:
        return
    analog = traces[traces.stage == "analog"].groupby("iteration")["value"].mean()
    if not analog.empty:
        print("\nMean interference leakage per alternation:")
        for it, value in analog.items():
            print(f"  {it:3d}  {value:.6g}")
    outer = traces[traces["loop"] == "outer"].groupby(["stage", "iteration"])["value"].mean()
    if not outer.empty:
        print("\nMean energy efficiency parameter per Dinkelbach iteration:")
        for (stage, it), value in outer.items():
            print(f"  {stage:14s} {it:3d}  {value:.6g}")


def reproduce(config_path, trials=None):
    """Run the sweep for one config and save its outputs."""
    print(f"Running {config_path.name}...")
    overrides = {"trials": trials} if trials else {}
    cfg = load_config(config_path, overrides)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    out_dir = os.path.join(ensure_results_dir(), f"{config_path.stem}_{timestamp}")

    records, summary = run_sweep(cfg)
    paths = emit_outputs(records, summary, out_dir, cfg)

    print("\nSummary:")
    print(summary.to_string(index=False))
    if len(cfg.power_grid_dbm) == 1:
        print_convergence(records)
    print(f"\nResults saved to {paths['summary'].parent}")
    return 0


def main():
    configs = list_configs()
    if not configs:
        print("No configs found!")
        return 1

    config_path = None
    trials = None

    i = 1
    while i < len(sys.argv):
        if sys.argv[i] == "--trials" and i + 1 < len(sys.argv):
            trials = int(sys.argv[i + 1])
            i += 1
        elif not config_path and os.path.exists(sys.argv[i]):
            config_path = Path(sys.argv[i])
        i += 1

    try:
        if config_path:
            return reproduce(config_path, trials)

        print("\nAvailable configs:")
        for i, config in enumerate(configs, 1):
            print(f"{i}. {config.stem}")

        while True:
            try:
                choice = input("\nSelect config number (or 'q' to quit): ")
                if choice.lower() == "q":
                    return 0

                idx = int(choice) - 1
                if 0 <= idx < len(configs):
                    return reproduce(configs[idx], trials)
                else:
                    print("Invalid selection!")
            except ValueError:
                print("Please enter a number!")
    except SubarrayEEError as e:
        print(f"Error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
