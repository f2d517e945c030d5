#!/usr/bin/env python3
"""Render the exported figure bundles with matplotlib.

Run scripts/reproduce_missions.py first; this reads runs/<mission>/figures
and writes runs/<mission>/figures/*.png: tracking error components, joint
positions against their limits, and obstacle distance against the
threshold.
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: [float(r[key]) for r in rows] for key in rows[0]} if rows else {}


def plot_mission(fig_dir: Path):
    pose = load(fig_dir / "pose_error.csv")
    if pose:
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
        for axis, color in zip("xyz", ("tab:blue", "tab:olive", "tab:red")):
            ax1.plot(pose["t"], pose[f"err_p{axis}"], color=color, label=axis)
            ax2.plot(pose["t"], pose[f"err_o{axis}"], color=color, label=axis)
        ax1.set_ylabel("position error [m]")
        ax2.set_ylabel("orientation error")
        ax2.set_xlabel("t [s]")
        ax1.legend()
        fig.tight_layout()
        fig.savefig(fig_dir / "pose_error.png", dpi=120)
        plt.close(fig)

    for bundle in fig_dir.glob("joint*_with_limits.csv"):
        data = load(bundle)
        if not data:
            continue
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(data["t"], data["position"], "k")
        ax.plot(data["t"], data["lower_limit"], "b--")
        ax.plot(data["t"], data["upper_limit"], "b--")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("joint position [rad]")
        fig.tight_layout()
        fig.savefig(bundle.with_suffix(".png"), dpi=120)
        plt.close(fig)

    distance = load(fig_dir / "obstacle_distance_with_threshold.csv")
    if distance:
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(distance["t"], distance["distance"], "b")
        ax.plot(distance["t"], distance["minimum_distance"], "k--")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("distance [m]")
        fig.tight_layout()
        fig.savefig(fig_dir / "obstacle_distance.png", dpi=120)
        plt.close(fig)


def run():
    found = False
    for fig_dir in Path("runs").glob("*/figures"):
        found = True
        plot_mission(fig_dir)
        print(f"plots written to {fig_dir}")
    if not found:
        print("no runs/<mission>/figures directories; run scripts/reproduce_missions.py first",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
