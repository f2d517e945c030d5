"""Trajectory logging: one CSV row per control tick, plus the per-figure
exports used to reproduce the experiment plots.

Floats are written with repr (shortest round-trip form), so identical
runs produce byte-identical files.  The column layout is documented in
docs/log_schema.md.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class LogRow:
    tick: int
    clock: float
    phase: int
    paused: bool
    q: tuple[float, ...]
    qdot: tuple[float, ...]
    err_components: tuple[float, ...]  # 6: position error xyz, orientation error xyz
    err_norm: float
    active_mask: int
    chosen_mask: int
    n_candidates: int
    feasible_count: int
    candidate_norms: tuple[float, ...]
    sigma: dict[str, float]  # scalar set-based task values

    @classmethod
    def from_tick(cls, tick, clock, phase, paused, q, qdot, diag) -> "LogRow":
        if diag is not None:
            err = diag.error.get("goal_pose", np.zeros(6))
            sigma = {
                sid: float(v[0]) for sid, v in diag.sigma.items() if v.shape == (1,)
            }
            return cls(
                tick=tick,
                clock=float(clock),
                phase=int(phase),
                paused=bool(paused),
                q=tuple(float(x) for x in q),
                qdot=tuple(float(x) for x in qdot),
                err_components=tuple(float(x) for x in err),
                err_norm=float(np.linalg.norm(err)),
                active_mask=diag.active_mask,
                chosen_mask=diag.chosen_mask,
                n_candidates=len(diag.candidate_norms),
                feasible_count=diag.feasible_count,
                candidate_norms=tuple(diag.candidate_norms),
                sigma=sigma,
            )
        return cls(
            tick=tick,
            clock=float(clock),
            phase=int(phase),
            paused=bool(paused),
            q=tuple(float(x) for x in q),
            qdot=tuple(float(x) for x in qdot),
            err_components=(0.0,) * 6,
            err_norm=0.0,
            active_mask=0,
            chosen_mask=0,
            n_candidates=0,
            feasible_count=0,
            candidate_norms=(),
            sigma={},
        )


ERR_COLUMNS = ["err_px", "err_py", "err_pz", "err_ox", "err_oy", "err_oz"]


def _fmt(x: float) -> str:
    return repr(float(x))


def columns_for(n_joints: int, set_based: list[tuple[str, float, float]]) -> list[str]:
    cols = ["tick", "clock", "phase", "paused"]
    cols += [f"q{i}" for i in range(n_joints)]
    cols += [f"qd{i}" for i in range(n_joints)]
    cols += ERR_COLUMNS + ["err_norm"]
    cols += ["active_mask", "chosen_mask", "n_candidates", "feasible_count", "candidate_norms"]
    for task_id, _, _ in set_based:
        cols += [f"sigma_{task_id}", f"lo_{task_id}", f"hi_{task_id}"]
    return cols


def write_trajectory(path, rows: list[LogRow], n_joints: int, set_based: list[tuple[str, float, float]]):
    """set_based: (task id, lower physical threshold, upper physical
    threshold) per set-based task, in hierarchy order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns_for(n_joints, set_based))
        for row in rows:
            record = [row.tick, _fmt(row.clock), row.phase, int(row.paused)]
            record += [_fmt(x) for x in row.q]
            record += [_fmt(x) for x in row.qdot]
            record += [_fmt(x) for x in row.err_components]
            record += [_fmt(row.err_norm)]
            record += [row.active_mask, row.chosen_mask, row.n_candidates, row.feasible_count]
            record += [";".join(_fmt(x) for x in row.candidate_norms)]
            for task_id, lo, hi in set_based:
                record += [_fmt(row.sigma.get(task_id, float("nan"))), _fmt(lo), _fmt(hi)]
            writer.writerow(record)
    return path


def read_trajectory(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def export_plot_data(log_path, out_dir) -> list[Path]:
    """Project a trajectory log into tidy per-figure CSV bundles:
    goal-pose error components, each joint limit with its bounds, and the
    obstacle distance with its threshold.  Returns the files written."""
    log_path, out_dir = Path(log_path), Path(out_dir)
    header, rows = read_trajectory(log_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if not rows:
        warnings.warn(f"trajectory log {log_path} has no data rows; exporting empty bundles")

    def write(name, cols, pick):
        out = out_dir / name
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in rows:
                writer.writerow(pick(row))
        written.append(out)

    write(
        "pose_error.csv",
        ["t"] + ERR_COLUMNS,
        lambda r: [r["clock"]] + [r[c] for c in ERR_COLUMNS],
    )
    for column in header:
        if not column.startswith("sigma_"):
            continue
        task_id = column[len("sigma_") :]
        if task_id.startswith("joint"):
            name = f"{task_id}_with_limits.csv"
            cols = ["t", "position", "lower_limit", "upper_limit"]
        else:
            name = f"{task_id}_with_threshold.csv"
            cols = ["t", "distance", "minimum_distance", "upper_limit"]
        write(
            name,
            cols,
            lambda r, tid=task_id: [r["clock"], r[f"sigma_{tid}"], r[f"lo_{tid}"], r[f"hi_{tid}"]],
        )
    return written
