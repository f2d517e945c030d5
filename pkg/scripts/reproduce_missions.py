#!/usr/bin/env python3
"""Run both reference missions and export the per-figure CSV bundles.

Produces, under runs/move and runs/drink, the trajectory/summary
artifacts plus tidy files for: goal-pose error components, each
mechanical-limit joint with its bounds, and the obstacle distance with
its threshold.
"""

import sys
from pathlib import Path

from armstack.cli import main

RUNS = Path("runs")

MISSIONS = {
    "move": "move water right",
    "drink": "drink water",
}


def run():
    failures = 0
    for name, command in MISSIONS.items():
        out = RUNS / name
        code = main(["--mission", command, "--out", str(out), "--seed", "0"])
        if code != 0:
            print(f"{name}: mission run failed with exit code {code}", file=sys.stderr)
            failures += 1
            continue
        code = main(["--export-plots", str(out / "trajectory.csv"), "--out", str(out / "figures")])
        failures += code != 0
    return failures


if __name__ == "__main__":
    raise SystemExit(run())
