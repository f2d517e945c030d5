"""High-level actions: compile operator commands into waypoint scripts
bound to task hierarchies, and run the closed control loop.

The two built-in actions mirror the experimental missions: "move"
(grasp the selected bottle and carry it to a preassigned side position)
and "drink" (bring the bottle top to the user's mouth, tilt, and put the
bottle back).  The non-selected bottle always becomes a point obstacle.
"""

from __future__ import annotations

import queue
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import world as worldmod
from .config import MissionParams
from .errors import (
    CombinatorialLimitError,
    GraspFailureError,
    HardLimitBreachError,
    UnknownObjectError,
)
from .kinematics import KinematicChain, Pose
from .quat import from_axis_angle, rotation_angle
from .solver import SolveDiagnostics, SolverParams, TaskHierarchy, solve_step
from .tasks import TaskSpec, gain_matrix
from .trajlog import LogRow
from .world import Perception, SimConfig, WorldState


@dataclass(frozen=True)
class Command:
    """Parsed operator command: which object, which action, which side."""

    object_id: str
    action: str
    sub_action: str = "none"


@dataclass(frozen=True)
class Phase:
    name: str
    frame: str  # "tool" or "bottle_top"
    target: Pose
    position_tolerance: float
    orientation_tolerance: float
    event: Optional[str] = None  # "attach" | "detach", fired on convergence


@dataclass(frozen=True)
class MissionScript:
    action: str
    object_id: str
    sub_action: str
    hierarchy: TaskHierarchy  # stack controlling the tool frame
    phases: tuple[Phase, ...]
    obstacle_id: str
    hierarchies: dict[str, TaskHierarchy] = field(default_factory=dict)  # per frame

    def hierarchy_for(self, frame: str) -> TaskHierarchy:
        return self.hierarchies.get(frame, self.hierarchy)


@dataclass(frozen=True)
class MissionStatus:
    state: str = "idle"  # idle|running|paused|stopped_emergency|completed|failed
    phase_index: int = 0
    fault: Optional[str] = None


def try_pause(status: MissionStatus) -> tuple[MissionStatus, bool]:
    """Pause is only legal while running; anything else is rejected."""
    if status.state == "running":
        return replace(status, state="paused"), True
    return status, False


def try_resume(status: MissionStatus) -> tuple[MissionStatus, bool]:
    if status.state == "paused":
        return replace(status, state="running"), True
    return status, False


@dataclass
class MissionResult:
    status: MissionStatus
    rows: list[LogRow]
    world: WorldState
    wall_time: float
    phase_durations: list[float]
    activation_counts: dict[str, int]
    final_position_error: float
    final_orientation_error: float


GOAL_TASK_ID = "goal_pose"
JOINT4_TASK_ID = "joint4_limit"
JOINT2_TASK_ID = "joint2_limit"
OBSTACLE_TASK_ID = "obstacle_distance"


def _limit_task(task_id: str, spec, gain: float) -> TaskSpec:
    return TaskSpec(
        task_id,
        "set_based",
        1,
        gain_matrix(gain, 1),
        "joint_value",
        {"joint_index": spec.joint_index},
        bounds=spec.to_bounds(),
    )


def _obstacle_task(obstacle_id: str, spec, gain: float) -> TaskSpec:
    return TaskSpec(
        OBSTACLE_TASK_ID,
        "set_based",
        1,
        gain_matrix(gain, 1),
        "obstacle_distance",
        {"obstacle": obstacle_id},
        bounds=spec.to_bounds(),
    )


def _goal_task(frame: str, gain: float) -> TaskSpec:
    return TaskSpec(GOAL_TASK_ID, "equality", 6, gain_matrix(gain, 6), "pose", {"frame": frame})


def _nearest_other_object(world: WorldState, object_id: str) -> str:
    selected = world.object(object_id)
    best, best_distance = None, np.inf
    for other_id, other in world.objects.items():
        if other_id == object_id:
            continue
        distance = float(np.linalg.norm(other.pose.position - selected.pose.position))
        if distance < best_distance:
            best, best_distance = other_id, distance
    if best is None:
        raise UnknownObjectError("no other object available to act as the obstacle")
    return best


def _lifted(pose: Pose, dz: float) -> Pose:
    return Pose(pose.position + np.array([0.0, 0.0, dz]), pose.orientation)


def _at(pose: Pose, position) -> Pose:
    return Pose(np.asarray(position, dtype=float), pose.orientation)


def compile_mission(
    command: Command,
    world: WorldState,
    perception: Perception,
    params: MissionParams,
) -> MissionScript:
    """Build the task hierarchy and waypoint phases for one command.

    Waypoints come from the perceived object pose at compile time; the
    mechanical-limit and obstacle bounds come from the mission parameters.
    """
    if command.action not in ("move", "drink"):
        raise ValueError(f"unknown action {command.action!r}")
    obj = world.object(command.object_id)  # raises UnknownObjectError
    obstacle_id = _nearest_other_object(world, command.object_id)

    perceived = replace(obj, pose=perception.object_pose(command.object_id))
    grasp = worldmod.grasp_pose(perceived)
    pos_tol, ori_tol = params.position_tolerance, params.orientation_tolerance

    def phase(name, frame, target, event=None):
        return Phase(name, frame, target, pos_tol, ori_tol, event)

    limit4 = _limit_task(JOINT4_TASK_ID, params.joint4_bounds, params.limit_gain)
    obstacle = _obstacle_task(obstacle_id, params.obstacle_bounds, params.obstacle_gain)

    if command.action == "move":
        if command.sub_action not in ("left", "right"):
            raise ValueError(f"move needs a left/right sub-action, got {command.sub_action!r}")
        stack = TaskHierarchy((limit4, obstacle, _goal_task("tool", params.pose_gain)))
        place_xy = params.place_left if command.sub_action == "left" else params.place_right
        place = _at(grasp, [place_xy[0], place_xy[1], grasp.position[2]])
        phases = (
            phase("approach", "tool", _lifted(grasp, params.approach_height)),
            phase("grasp", "tool", grasp, event="attach"),
            phase("lift", "tool", _lifted(grasp, params.lift_height)),
            phase("transfer", "tool", _lifted(place, params.lift_height)),
            phase("place", "tool", place, event="detach"),
            phase("retreat", "tool", _lifted(place, params.approach_height)),
        )
        return MissionScript(
            action="move",
            object_id=command.object_id,
            sub_action=command.sub_action,
            hierarchy=stack,
            phases=phases,
            obstacle_id=obstacle_id,
            hierarchies={"tool": stack},
        )

    # drink: insert the second-joint limit at priority 2 and control the
    # bottle top once the bottle is in hand
    limit2 = _limit_task(JOINT2_TASK_ID, params.joint2_bounds, params.limit_gain)
    tool_stack = TaskHierarchy(
        (limit4, limit2, obstacle, _goal_task("tool", params.pose_gain))
    )
    top_stack = TaskHierarchy(
        (limit4, limit2, obstacle, _goal_task("bottle_top", params.pose_gain))
    )
    cap = perceived.pose.compose(perceived.top_offset)
    mouth = perception.mouth.position + np.asarray(params.mouth_offset, dtype=float)
    tilt = from_axis_angle((1.0, 0.0, 0.0), -params.drink_tilt)
    cap_at_mouth = Pose(mouth, cap.orientation)
    phases = (
        phase("approach", "tool", _lifted(grasp, params.approach_height)),
        phase("grasp", "tool", grasp, event="attach"),
        phase("raise", "bottle_top", _lifted(cap, params.lift_height)),
        phase("to_mouth", "bottle_top", cap_at_mouth),
        phase("tilt", "bottle_top", Pose(mouth, tilt)),
        phase("upright", "bottle_top", cap_at_mouth),
        phase("return", "bottle_top", _lifted(cap, params.lift_height)),
        phase("lower", "bottle_top", cap, event="detach"),
        phase("retreat", "tool", _lifted(grasp, params.approach_height)),
    )
    return MissionScript(
        action="drink",
        object_id=command.object_id,
        sub_action="none",
        hierarchy=tool_stack,
        phases=phases,
        obstacle_id=obstacle_id,
        hierarchies={"tool": tool_stack, "bottle_top": top_stack},
    )


def _drain_inbox(inbox) -> list[str]:
    commands = []
    if inbox is None:
        return commands
    while True:
        try:
            commands.append(inbox.get_nowait())
        except queue.Empty:
            return commands


def run_mission(
    script: MissionScript,
    world: WorldState,
    chain: KinematicChain,
    params: MissionParams,
    inbox: Optional[queue.SimpleQueue] = None,
    rng: Optional[np.random.Generator] = None,
    observer: Optional[Callable[[MissionStatus, WorldState, Optional[SolveDiagnostics]], None]] = None,
) -> MissionResult:
    """Run the control loop until the script completes, faults, or is
    stopped.  The inbox is drained once per tick; stop dominates, and an
    emergency stop produces a zero-velocity tick before the loop ends."""
    sim = SimConfig(dt=params.dt, duration_cap=params.duration_cap, velocity_cap=params.velocity_cap, noise=params.noise)
    solver_params = SolverParams(damping=params.damping, velocity_cap=params.velocity_cap, max_active=params.max_active)
    status = MissionStatus(state="running", phase_index=0)
    rows: list[LogRow] = []
    started = time.perf_counter()
    start_clock = world.clock
    phase_started = world.clock
    phase_durations: list[float] = []
    previous_active = 0
    activation_counts: dict[str, int] = {}
    bits = script.hierarchy.set_based_bits
    final_pos_err = np.inf
    final_ori_err = np.inf
    tick = 0

    def log(diag: Optional[SolveDiagnostics], qdot, paused: bool):
        rows.append(
            LogRow.from_tick(
                tick=tick,
                clock=world.clock,
                phase=status.phase_index,
                paused=paused,
                q=world.arm.q,
                qdot=qdot,
                diag=diag,
            )
        )
        if observer is not None:
            observer(status, world, diag)

    def finish(state: str, fault: Optional[str] = None) -> MissionResult:
        final = replace(status, state=state, fault=fault)
        if observer is not None:
            observer(final, world, None)
        return MissionResult(
            status=final,
            rows=rows,
            world=world,
            wall_time=time.perf_counter() - started,
            phase_durations=phase_durations,
            activation_counts=activation_counts,
            final_position_error=final_pos_err,
            final_orientation_error=final_ori_err,
        )

    while True:
        stop_requested = False
        for item in _drain_inbox(inbox):
            if item == "stop":
                stop_requested = True
            elif item == "pause":
                status, _ = try_pause(status)
            elif item == "resume":
                status, _ = try_resume(status)
        if stop_requested:
            qdot = np.zeros(chain.n)
            world = worldmod.step(world, qdot, sim, chain)
            log(None, qdot, paused=False)
            return finish("stopped_emergency")

        if world.clock - start_clock > params.duration_cap:
            return finish("failed", fault="duration cap exceeded")

        if status.state == "paused":
            qdot = np.zeros(chain.n)
            world = worldmod.step(world, qdot, sim, chain)
            log(None, qdot, paused=True)
            tick += 1
            continue

        perception = worldmod.perceive(world, sim, rng)
        phase = script.phases[status.phase_index]
        hierarchy = script.hierarchy_for(phase.frame)
        ctx = worldmod.eval_context(chain, world, perception)
        try:
            qdot, diag = solve_step(hierarchy, ctx, {GOAL_TASK_ID: phase.target}, solver_params)
        except (HardLimitBreachError, CombinatorialLimitError) as exc:
            return finish("failed", fault=str(exc))

        newly_active = diag.active_mask & ~previous_active
        for task_id, bit in bits.items():
            if newly_active & (1 << bit):
                activation_counts[task_id] = activation_counts.get(task_id, 0) + 1
        previous_active = diag.active_mask

        current = ctx.frame_pose(phase.frame)
        final_pos_err = float(np.linalg.norm(phase.target.position - current.position))
        final_ori_err = rotation_angle(phase.target.orientation, current.orientation)

        world = worldmod.step(world, qdot, sim, chain)
        log(diag, qdot, paused=False)
        tick += 1

        if final_pos_err < phase.position_tolerance and final_ori_err < phase.orientation_tolerance:
            if phase.event == "attach":
                try:
                    world = worldmod.attach(world, chain, script.object_id)
                except GraspFailureError as exc:
                    return finish("failed", fault=str(exc))
            elif phase.event == "detach":
                world = worldmod.detach(world)
            phase_durations.append(world.clock - phase_started)
            phase_started = world.clock
            if status.phase_index + 1 >= len(script.phases):
                return finish("completed")
            status = replace(status, phase_index=status.phase_index + 1)
