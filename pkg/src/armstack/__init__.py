"""armstack: set-based task-priority kinematic control for a redundant
assistive arm, with waypoint missions, a UDP command gateway and a
deterministic simulator."""

from .config import MissionParams, WorldLayout, default_chain, default_mission_params, default_world
from .kinematics import (
    TOOL,
    Joint,
    JointState,
    KinematicChain,
    Pose,
    damped_pseudoinverse,
    forward_kinematics,
    geometric_jacobian,
    null_space_projector,
)
from .mission import Command, MissionScript, MissionStatus, compile_mission, run_mission
from .solver import SolverParams, TaskHierarchy, solve_step
from .tasks import SetBounds, TaskReading, TaskSpec
from .world import SimConfig, WorldState, initial_world

__version__ = "0.1.0"

__all__ = [
    "Command",
    "Joint",
    "JointState",
    "KinematicChain",
    "MissionParams",
    "MissionScript",
    "MissionStatus",
    "Pose",
    "SetBounds",
    "SimConfig",
    "SolverParams",
    "TaskHierarchy",
    "TaskReading",
    "TaskSpec",
    "TOOL",
    "WorldLayout",
    "WorldState",
    "compile_mission",
    "damped_pseudoinverse",
    "default_chain",
    "default_mission_params",
    "default_world",
    "forward_kinematics",
    "geometric_jacobian",
    "initial_world",
    "run_mission",
    "null_space_projector",
    "solve_step",
]
