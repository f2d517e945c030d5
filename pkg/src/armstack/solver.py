"""Prioritized closed-loop inverse kinematics with set-based tasks.

One control tick runs four stages:

1. build the active stack: every equality task, plus each set-based task
   whose value crossed an activation threshold (annotated upper/lower and
   given the matching safety value as a temporary equality target);
2. enumerate candidate joint velocities, one per subset of the active
   set-based tasks, by composing each stacked hierarchy through
   null-space projections of all higher-priority tasks;
3. keep the candidates that do not push any excluded active task further
   toward its bound (the candidate controlling every active task is
   always kept, so the feasible set is never empty);
4. choose the feasible candidate with the largest velocity norm, the
   least conservative one.

Velocity inversion uses a damped pseudoinverse; null-space projectors
always use the exact pseudoinverse so that priority is strict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CombinatorialLimitError,
    DimensionError,
    HardLimitBreachError,
    OverConstrainedError,
)
from .kinematics import damped_pseudoinverse, null_space_projector
from .tasks import EvalContext, TaskReading, TaskSpec, evaluate_task, task_error


@dataclass(frozen=True)
class TaskHierarchy:
    """Priority-ordered task stack; index 0 is the highest priority."""

    tasks: tuple[TaskSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate task ids in hierarchy: {ids}")

    def validate_for(self, n: int) -> None:
        equality_rows = sum(t.dim for t in self.tasks if t.kind == "equality")
        if equality_rows > n:
            raise OverConstrainedError(
                f"equality tasks demand {equality_rows} rows but the arm has {n} joints"
            )

    @property
    def set_based_bits(self) -> dict[str, int]:
        """Bit position of each set-based task, in priority order."""
        bits = {}
        for t in self.tasks:
            if t.kind == "set_based":
                bits[t.id] = len(bits)
        return bits


@dataclass(frozen=True)
class SolverParams:
    damping: float = 0.01
    velocity_cap: float = 0.8
    max_active: int = 8
    feasibility_tol: float = 1e-9
    tie_tol: float = 1e-12
    hard_limit_band: float = 0.5


@dataclass(frozen=True)
class ActiveTask:
    """One member of the active stack.  `side` is None for equality tasks,
    otherwise which bound was crossed; `target` is the safety value used
    as the temporary equality target."""

    spec: TaskSpec
    reading: TaskReading
    side: Optional[str] = None
    target: Optional[float] = None


@dataclass(frozen=True)
class ActiveStack:
    entries: tuple[ActiveTask, ...]

    @property
    def set_based(self) -> tuple[ActiveTask, ...]:
        return tuple(e for e in self.entries if e.side is not None)

    @property
    def n_active(self) -> int:
        return len(self.set_based)


@dataclass(frozen=True)
class StackEntry:
    """One task ready for composition: Jacobian plus the task-space
    reference velocity (gain times error; feedforward is zero between
    waypoints)."""

    key: str
    jacobian: np.ndarray
    velocity_ref: np.ndarray
    permanent: bool = True
    contribution: Optional[np.ndarray] = None  # cached pinv(J) @ velocity_ref


@dataclass(frozen=True)
class Candidate:
    mask: int
    velocity: np.ndarray


@dataclass(frozen=True)
class SolutionSet:
    candidates: tuple[Candidate, ...]
    feasible: tuple[Candidate, ...]
    chosen: Candidate


@dataclass(frozen=True)
class SolveDiagnostics:
    """Per-tick record of what the solver saw and decided."""

    active_mask: int
    chosen_mask: int
    candidate_norms: tuple[float, ...]
    feasible_count: int
    sigma: dict[str, np.ndarray]
    error: dict[str, np.ndarray]
    sides: dict[str, str]
    qdot_raw: np.ndarray
    qdot: np.ndarray
    scale: float
    readings: dict[str, TaskReading] = field(repr=False, default_factory=dict)


def clik_velocity(
    entries: Sequence[StackEntry],
    n: int,
    damping: float = 0.0,
    projector_cache: Optional[dict] = None,
) -> np.ndarray:
    """Compose the prioritized stack: each task velocity is its (damped)
    pseudoinverse solution, projected through the null space of the
    augmented Jacobian of every higher-priority task."""
    permanent_rows = sum(e.jacobian.shape[0] for e in entries if e.permanent)
    if permanent_rows > n:
        raise OverConstrainedError(
            f"equality rows ({permanent_rows}) exceed joint count ({n})"
        )
    qdot = np.zeros(n)
    if not entries:
        return qdot
    for e in entries:
        if e.jacobian.shape[1] != n:
            raise DimensionError(
                f"task {e.key!r} jacobian has {e.jacobian.shape[1]} columns, expected {n}"
            )

    stacked_rows: list[np.ndarray] = []
    prefix: tuple[str, ...] = ()
    N = np.eye(n)
    for i, e in enumerate(entries):
        contribution = e.contribution
        if contribution is None:
            contribution = damped_pseudoinverse(e.jacobian, damping) @ e.velocity_ref
        if i == 0:
            qdot = contribution
        else:
            qdot = qdot + N @ contribution
        if i < len(entries) - 1:
            stacked_rows.append(e.jacobian)
            prefix = prefix + (e.key,)
            if projector_cache is not None and prefix in projector_cache:
                N = projector_cache[prefix]
            else:
                N = null_space_projector(np.vstack(stacked_rows))
                if projector_cache is not None:
                    projector_cache[prefix] = N
    return qdot


def build_active_stack(
    hierarchy: TaskHierarchy,
    readings: dict[str, TaskReading],
    hard_limit_band: float = 0.5,
) -> ActiveStack:
    """Stage 1: equality tasks always join; a set-based task joins when its
    value crossed an activation threshold.  A value outside the physical
    band (threshold ± hard_limit_band) is a hard fault."""
    entries = []
    for spec in hierarchy.tasks:
        reading = readings[spec.id]
        if spec.kind == "equality":
            entries.append(ActiveTask(spec, reading))
            continue
        if reading.value.shape != (1,):
            raise DimensionError(f"set-based task {spec.id!r} must read a scalar")
        sigma = float(reading.value[0])
        b = spec.bounds
        if sigma < b.lower - hard_limit_band or sigma > b.upper + hard_limit_band:
            raise HardLimitBreachError(
                f"task {spec.id!r} value {sigma:.4f} left the physical band "
                f"[{b.lower - hard_limit_band:.4f}, {b.upper + hard_limit_band:.4f}]"
            )
        if sigma > b.activation_upper:
            entries.append(ActiveTask(spec, reading, side="upper", target=b.safety_upper))
        elif sigma < b.activation_lower:
            entries.append(ActiveTask(spec, reading, side="lower", target=b.safety_lower))
    return ActiveStack(tuple(entries))


def _stack_entries(active: ActiveStack, targets: dict, mask: int) -> list[StackEntry]:
    entries = []
    bit = 0
    for at in active.entries:
        if at.side is None:
            err = task_error(at.spec, at.reading, targets[at.spec.id])
            entries.append(
                StackEntry(at.spec.id, at.reading.jacobian, at.spec.gain @ err, permanent=True)
            )
        else:
            if (mask >> bit) & 1:
                err = np.array([at.target]) - at.reading.value
                entries.append(
                    StackEntry(at.spec.id, at.reading.jacobian, at.spec.gain @ err, permanent=False)
                )
            bit += 1
    return entries


def enumerate_solutions(
    active: ActiveStack,
    targets: dict,
    n: int,
    damping: float = 0.0,
    max_active: int = 8,
) -> list[Candidate]:
    """Stage 2: one candidate velocity per subset of the active set-based
    tasks, in ascending bitmask order (bit i = i-th active set-based task
    by priority)."""
    n_a = active.n_active
    if n_a > max_active:
        raise CombinatorialLimitError(
            f"{n_a} active set-based tasks exceed the solution-tree limit ({max_active})"
        )
    cache: dict = {}
    # pinv(J) @ v per task is mask-independent; compute once.
    contributions: dict[str, np.ndarray] = {}
    candidates = []
    for mask in range(1 << n_a):
        entries = _stack_entries(active, targets, mask)
        keyed = []
        for e in entries:
            if e.key not in contributions:
                contributions[e.key] = (
                    damped_pseudoinverse(e.jacobian, damping) @ e.velocity_ref
                )
            keyed.append(
                StackEntry(e.key, e.jacobian, e.velocity_ref, e.permanent, contributions[e.key])
            )
        candidates.append(Candidate(mask, clik_velocity(keyed, n, damping, cache)))
    return candidates


def filter_feasible(
    candidates: Sequence[Candidate],
    active: ActiveStack,
    feasibility_tol: float = 1e-9,
) -> list[Candidate]:
    """Stage 3: drop candidates that push an excluded active task toward
    its violated bound.  The all-tasks candidate is kept unconditionally."""
    set_based = active.set_based
    full_mask = (1 << len(set_based)) - 1
    feasible = []
    for cand in candidates:
        if cand.mask == full_mask:
            feasible.append(cand)
            continue
        ok = True
        for bit, at in enumerate(set_based):
            if (cand.mask >> bit) & 1:
                continue  # controlled as an equality; exempt from the sign test
            rate = float(at.reading.jacobian[0] @ cand.velocity)
            if at.side == "upper" and rate > feasibility_tol:
                ok = False
                break
            if at.side == "lower" and rate < -feasibility_tol:
                ok = False
                break
        if ok:
            feasible.append(cand)
    return feasible


def choose_solution(feasible: Sequence[Candidate], tie_tol: float = 1e-12) -> Candidate:
    """Stage 4: highest-norm feasible candidate; near-ties go to the one
    controlling the fewest tasks, then to the lowest bitmask."""
    if not feasible:
        raise ValueError("feasible set is empty; the retention rule was violated")
    norms = [float(np.linalg.norm(c.velocity)) for c in feasible]
    best = max(norms)
    contenders = [c for c, nm in zip(feasible, norms) if nm >= best - tie_tol]
    return min(contenders, key=lambda c: (int(c.mask).bit_count(), c.mask))


def cap_velocity(qdot: np.ndarray, cap: float) -> tuple[np.ndarray, float]:
    """Uniform scaling keeps the direction, so every feasibility sign test
    made on the raw solution still holds."""
    peak = float(np.max(np.abs(qdot))) if qdot.size else 0.0
    if cap > 0.0 and peak > cap:
        scale = cap / peak
        return qdot * scale, scale
    return qdot, 1.0


def solve_step(
    hierarchy: TaskHierarchy,
    ctx: EvalContext,
    targets: dict,
    params: SolverParams = SolverParams(),
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Run all four stages for one control tick."""
    n = ctx.chain.n
    hierarchy.validate_for(n)
    readings = {
        spec.id: evaluate_task(spec, ctx, targets.get(spec.id)) for spec in hierarchy.tasks
    }
    if not np.all([np.all(np.isfinite(r.value)) and np.all(np.isfinite(r.jacobian)) for r in readings.values()]):
        raise ValueError("non-finite task reading")
    active = build_active_stack(hierarchy, readings, params.hard_limit_band)
    candidates = enumerate_solutions(active, targets, n, params.damping, params.max_active)
    feasible = filter_feasible(candidates, active, params.feasibility_tol)
    chosen = choose_solution(feasible, params.tie_tol)
    qdot, scale = cap_velocity(chosen.velocity, params.velocity_cap)

    bits = hierarchy.set_based_bits
    active_mask = 0
    sides = {}
    for at in active.set_based:
        active_mask |= 1 << bits[at.spec.id]
        sides[at.spec.id] = at.side
    chosen_mask = 0
    for local_bit, at in enumerate(active.set_based):
        if (chosen.mask >> local_bit) & 1:
            chosen_mask |= 1 << bits[at.spec.id]

    errors = {}
    for at in active.entries:
        if at.side is None:
            errors[at.spec.id] = task_error(at.spec, at.reading, targets[at.spec.id])
        else:
            errors[at.spec.id] = np.array([at.target]) - at.reading.value
    for spec in hierarchy.tasks:
        if spec.id not in errors:
            errors[spec.id] = np.zeros(spec.dim)

    diag = SolveDiagnostics(
        active_mask=active_mask,
        chosen_mask=chosen_mask,
        candidate_norms=tuple(float(np.linalg.norm(c.velocity)) for c in candidates),
        feasible_count=len(feasible),
        sigma={sid: r.value for sid, r in readings.items()},
        error=errors,
        sides=sides,
        qdot_raw=chosen.velocity,
        qdot=qdot,
        scale=scale,
        readings=readings,
    )
    return qdot, diag
