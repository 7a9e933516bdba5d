import os
import sys
import time
from datetime import datetime
from pathlib import Path

import cli
from config import DATA_DIR

# Root directory of the project (folder where this file lives)
ROOT = Path(__file__).resolve().parent
OUT_DIR = os.getenv("SNR_PIPELINE_OUT", str(ROOT / "out" / "pipeline"))


def _data(name: str) -> str:
    return os.path.join(DATA_DIR, name)


NETWORK = ["--nodes", _data("nodes.csv"), "--edges", _data("edges.csv")]

# Ordered list of pipeline steps: (label, cli arguments)
PIPELINE_STEPS = [
    ("Graph statistics", ["stats", *NETWORK, "--communities", "4", "--out", OUT_DIR]),
    ("Intensity tables", ["intensity", *NETWORK, "--events", _data("events.csv"), "--out", OUT_DIR]),
    ("Covariate summary", ["summarize", "--covariates", _data("covariates.csv"), "--out", OUT_DIR]),
    ("Model fit", [
        "fit", *NETWORK,
        "--events", _data("events.csv"),
        "--covariates", _data("covariates.csv"),
        "--model", _data("model.cfg"),
        "--out", OUT_DIR,
    ]),
]


def run_step(name: str, argv: list) -> float:
    """Run a single cli subcommand in-process, fail fast on error; returns the duration in seconds."""
    print()
    print("=" * 80)
    print(f"[{datetime.now().strftime('%Y-%m-%d %H:%M:%S')}] Starting step: {name}")
    print(f"Running: cli.py {' '.join(argv)}")
    print("=" * 80)

    start = time.perf_counter()
    code = cli.main(argv)
    duration = time.perf_counter() - start

    if code != 0:
        raise RuntimeError(
            f"Step '{name}' failed with exit code {code} "
            f"(duration {duration:.1f}s)"
        )

    print(f"[{datetime.now().strftime('%Y-%m-%d %H:%M:%S')}] Completed: {name} in {duration:.1f} seconds")
    return duration


def main():
    print("=" * 80)
    print("STRUCTURED NETWORK REGRESSION PIPELINE")
    print("Steps:")
    for idx, (name, argv) in enumerate(PIPELINE_STEPS, start=1):
        print(f"  {idx}. {name}  (cli.py {argv[0]})")
    print("=" * 80)

    step_timings = []
    pipeline_start = time.perf_counter()
    for name, argv in PIPELINE_STEPS:
        step_timings.append((name, run_step(name, argv)))
    total_duration = time.perf_counter() - pipeline_start

    print()
    print("=" * 80)
    print(f"[{datetime.now().strftime('%Y-%m-%d %H:%M:%S')}] All pipeline steps completed successfully.")
    print(f"Total duration: {total_duration:.1f} seconds")
    print("Step timings:")
    for name, dur in step_timings:
        print(f"  - {name}: {dur:.1f}s")
    print(f"Outputs in: {OUT_DIR}")
    print("=" * 80)


if __name__ == "__main__":
    try:
        main()
    except Exception as e:
        print()
        print("[ERROR] PIPELINE FAILED")
        print("-" * 80)
        print(str(e))
        print("-" * 80)
        sys.exit(1)
