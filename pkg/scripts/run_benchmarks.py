#!/usr/bin/env python3
"""Run both benchmark scenarios with both solver variants and tabulate.

Regenerates the closed-loop data behind the benchmark tables: per-step
trajectory CSVs, summary JSONs, and first-timestep diagnostics, then
prints a compact comparison table (median solver times, final RCSO).

Usage:
    python scripts/run_benchmarks.py [--out results] [--repeat 5]
"""

import argparse
import json
import sys
from pathlib import Path

from qlmpc.cli import RunConfig, run_diagnose, run_simulate

SCENARIOS = ("unicycle", "adip")
VARIANTS = ("standard", "exact")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per run; higher smooths the medians")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    out = Path(args.out)
    rows = []
    for scenario in SCENARIOS:
        for variant in VARIANTS:
            print(f"running {scenario} / {variant} ...", flush=True)
            cfg = RunConfig(scenario=scenario, variant=variant,
                            repeat=args.repeat, seed=args.seed, out=str(out))
            code = run_simulate(cfg)
            if code != 0:
                print(f"  FAILED with exit code {code}", file=sys.stderr)
                return code
            summary = json.loads((out / f"{scenario}_{variant}_summary.json").read_text())
            rows.append((scenario, variant,
                         1e3 * summary["solve_time_s"]["median"],
                         1e3 * summary["prep_time_s"]["median"],
                         1e3 * summary["qp_time_s"]["median"],
                         summary["final_rcso"]))
        print(f"diagnosing {scenario} ...", flush=True)
        code = run_diagnose(RunConfig(scenario=scenario, seed=args.seed, out=str(out)))
        if code != 0:
            print(f"  diagnostics FAILED with exit code {code}", file=sys.stderr)
            return code

    print()
    print(f"{'scenario':<10} {'variant':<10} {'solve[ms]':>10} {'prep[ms]':>10} "
          f"{'qp[ms]':>8} {'final RCSO':>12}")
    for scenario, variant, solve_ms, prep_ms, qp_ms, rcso in rows:
        print(f"{scenario:<10} {variant:<10} {solve_ms:>10.3f} {prep_ms:>10.3f} "
              f"{qp_ms:>8.3f} {rcso:>12.4f}")
    print(f"\nwrote CSV/JSON outputs to {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
