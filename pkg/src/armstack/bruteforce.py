"""Brute-force reference for the solver's solution tree.

This module re-derives the whole enumerate/filter/argmax pipeline from
scratch (subset enumeration via itertools, its own stack composition and
its own sign tests) so the production solver can be checked against it.
It deliberately shares no code with :mod:`armstack.solver` beyond the
data types describing a scenario.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .solver import ActiveStack, ActiveTask, TaskHierarchy
from .tasks import SetBounds, TaskReading, TaskSpec, task_error


@dataclass(frozen=True)
class Scenario:
    """A frozen single-tick solver problem: an active stack with synthetic
    readings, plus equality-task targets."""

    hierarchy: TaskHierarchy
    active: ActiveStack
    targets: dict
    n: int


def _compose(stack, n: int, damping: float) -> np.ndarray:
    """Independent stacked-hierarchy composition (same math, written from
    the definition: each task solved alone, projected through the null
    space of everything above it)."""
    qdot = np.zeros(n)
    jacobians = []
    for index, (J, v) in enumerate(stack):
        if damping == 0.0:
            task_solution = np.linalg.pinv(J) @ v
        else:
            lam2 = damping * damping
            task_solution = J.T @ np.linalg.inv(J @ J.T + lam2 * np.eye(J.shape[0])) @ v
        if index == 0:
            qdot = task_solution
        else:
            J_aug = np.vstack(jacobians)
            N = np.eye(n) - np.linalg.pinv(J_aug) @ J_aug
            qdot = qdot + N @ task_solution
        jacobians.append(J)
    return qdot


def brute_force_choice(
    active: ActiveStack,
    targets: dict,
    n: int,
    damping: float = 0.0,
    feasibility_tol: float = 1e-9,
    tie_tol: float = 1e-12,
):
    """Enumerate every subset of the active set-based tasks, compose each
    stacked hierarchy, filter by the directional sign tests and pick the
    highest-norm survivor.  Returns (mask, velocity, all_velocities)."""
    set_based = active.set_based
    n_a = len(set_based)
    velocities = {}
    for r in range(n_a + 1):
        for subset in itertools.combinations(range(n_a), r):
            included = set(subset)
            stack = []
            bit = 0
            for at in active.entries:
                if at.side is None:
                    err = task_error(at.spec, at.reading, targets[at.spec.id])
                    stack.append((at.reading.jacobian, at.spec.gain @ err))
                else:
                    if bit in included:
                        err = np.array([at.target]) - at.reading.value
                        stack.append((at.reading.jacobian, at.spec.gain @ err))
                    bit += 1
            mask = sum(1 << b for b in included)
            velocities[mask] = _compose(stack, n, damping)

    survivors = []
    for mask, qdot in velocities.items():
        keeps = True
        for bit, at in enumerate(set_based):
            if mask & (1 << bit):
                continue
            rate = float(at.reading.jacobian[0] @ qdot)
            moving_toward_bound = (at.side == "upper" and rate > feasibility_tol) or (
                at.side == "lower" and rate < -feasibility_tol
            )
            if moving_toward_bound:
                keeps = False
                break
        if keeps or mask == (1 << n_a) - 1:
            survivors.append(mask)

    assert survivors, "retention rule guarantees at least the all-tasks solution"
    best_norm = max(float(np.linalg.norm(velocities[m])) for m in survivors)
    near = [m for m in survivors if float(np.linalg.norm(velocities[m])) >= best_norm - tie_tol]
    winner = min(near, key=lambda m: (bin(m).count("1"), m))
    return winner, velocities[winner], velocities


def random_scenario(rng: np.random.Generator, n: int = 7, n_active: int | None = None) -> Scenario:
    """A randomized solver problem with synthetic readings.

    Equality part: one or two 3-dim tasks with random full-rank Jacobians.
    Set-based part: `n_active` scalar tasks, each already beyond an
    activation threshold on a random side.
    """
    if n_active is None:
        n_active = int(rng.integers(1, 4))
    n_equality = int(rng.integers(1, 3))
    bounds = SetBounds.with_midpoint_safety(lower=-1.0, upper=1.0, buffer=0.2)

    specs = []
    entries = []
    targets = {}
    slots = ["set"] * n_active + ["eq"] * n_equality
    rng.shuffle(slots)
    eq_count = set_count = 0
    for slot in slots:
        if slot == "eq":
            sid = f"eq{eq_count}"
            eq_count += 1
            spec = TaskSpec(sid, "equality", 3, np.diag(rng.uniform(0.5, 2.0, size=3)), "position")
            reading = TaskReading(rng.normal(size=3), rng.normal(size=(3, n)))
            targets[sid] = rng.normal(size=3)
            entries.append(ActiveTask(spec, reading))
        else:
            sid = f"set{set_count}"
            set_count += 1
            spec = TaskSpec(
                sid,
                "set_based",
                1,
                np.array([[rng.uniform(0.5, 2.0)]]),
                "joint_value",
                {"joint_index": 0},
                bounds=bounds,
            )
            side = "upper" if rng.random() < 0.5 else "lower"
            sigma = rng.uniform(0.85, 0.99) * (1.0 if side == "upper" else -1.0)
            target = bounds.safety_upper if side == "upper" else bounds.safety_lower
            reading = TaskReading(np.array([sigma]), rng.normal(size=(1, n)))
            entries.append(ActiveTask(spec, reading, side=side, target=target))
        specs.append(entries[-1].spec)

    return Scenario(
        hierarchy=TaskHierarchy(tuple(specs)),
        active=ActiveStack(tuple(entries)),
        targets=targets,
        n=n,
    )


def run_oracle_comparison(cases: int, seed: int, n: int = 7, damping: float = 0.0):
    """Compare the production solver against the brute force on randomized
    scenarios.  Returns a list of mismatch descriptions (empty = pass)."""
    from .solver import choose_solution, enumerate_solutions, filter_feasible

    rng = np.random.default_rng(seed)
    mismatches = []
    for case in range(cases):
        scenario = random_scenario(rng, n=n, n_active=int(rng.integers(1, 4)))
        candidates = enumerate_solutions(
            scenario.active, scenario.targets, scenario.n, damping=damping
        )
        feasible = filter_feasible(candidates, scenario.active)
        chosen = choose_solution(feasible)
        want_mask, want_velocity, _ = brute_force_choice(
            scenario.active, scenario.targets, scenario.n, damping=damping
        )
        if chosen.mask != want_mask or not np.array_equal(chosen.velocity, want_velocity):
            mismatches.append(
                f"case {case}: solver mask {chosen.mask} vs oracle {want_mask}; "
                f"max velocity delta {np.max(np.abs(chosen.velocity - want_velocity)):.3e}"
            )
        if not feasible:
            mismatches.append(f"case {case}: empty feasible set")
    return mismatches
