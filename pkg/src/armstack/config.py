"""Configuration: built-in defaults and YAML loaders for chain, world and
mission-parameter files.

The shipped YAML files under ``configs/`` mirror the code defaults; a run
without explicit paths uses the defaults directly.  Angles are radians,
lengths meters throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import quat
from .errors import ConfigError
from .kinematics import Joint, KinematicChain, Pose
from .tasks import DEFAULT_DISTANCE_BUFFER, DEFAULT_JOINT_BUFFER, SetBounds

PI = math.pi


# ---------------------------------------------------------------------------
# World model value types (consumed by armstack.world)


@dataclass(frozen=True)
class WorldObject:
    """A named manipulable object: pose of its centroid plus the rigid
    offsets that define where to grasp it and where its top sits."""

    label: str
    pose: Pose
    graspable: bool = True
    grasp_offset: Pose = field(default_factory=Pose.identity)  # object -> tool at grasp
    top_offset: Pose = field(default_factory=Pose.identity)  # object -> top/cap frame


@dataclass(frozen=True)
class WorldLayout:
    objects: dict[str, WorldObject]
    mouth: Pose
    home_q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "home_q", np.asarray(self.home_q, dtype=float))


@dataclass(frozen=True)
class BoundsSpec:
    lower: float = -math.inf
    upper: float = math.inf
    buffer: float = DEFAULT_JOINT_BUFFER
    joint_index: int | None = None

    def to_bounds(self) -> SetBounds:
        return SetBounds.with_midpoint_safety(self.lower, self.upper, self.buffer)


@dataclass(frozen=True)
class MissionParams:
    """Everything the mission compiler and control loop read from config."""

    dt: float = 0.01
    duration_cap: float = 120.0
    velocity_cap: float = 0.8
    damping: float = 0.01
    max_active: int = 8
    pose_gain: float = 3.0
    limit_gain: float = 2.0
    obstacle_gain: float = 2.0
    joint4_bounds: BoundsSpec = BoundsSpec(lower=0.7, upper=5.5, buffer=DEFAULT_JOINT_BUFFER, joint_index=3)
    joint2_bounds: BoundsSpec = BoundsSpec(lower=1.9, upper=5.1, buffer=DEFAULT_JOINT_BUFFER, joint_index=1)
    obstacle_bounds: BoundsSpec = BoundsSpec(lower=0.25, buffer=DEFAULT_DISTANCE_BUFFER)
    approach_height: float = 0.10
    lift_height: float = 0.12
    place_left: tuple[float, float] = (0.30, 0.42)
    place_right: tuple[float, float] = (0.30, -0.42)
    mouth_offset: tuple[float, float, float] = (0.0, -0.06, 0.0)
    drink_tilt: float = PI / 3.0
    position_tolerance: float = 0.005
    orientation_tolerance: float = 0.02
    noise: float = 0.0


# ---------------------------------------------------------------------------
# Built-in defaults


def default_chain() -> KinematicChain:
    """Reference 7-DOF arm: alternating z/x axes, ~0.9 m reach.

    The x-axis (pitch) joints carry a −π offset rotation so the arm is
    straight when those joints read π: joint values then live in the same
    [0, 2π]-style range the mechanical limits are written in.
    """
    flip = quat.from_axis_angle((1.0, 0.0, 0.0), -PI)
    lift = [0.15, 0.10, 0.20, 0.20, 0.10, 0.10, 0.05]
    axes = [(0, 0, 1), (1, 0, 0), (0, 0, 1), (1, 0, 0), (0, 0, 1), (1, 0, 0), (0, 0, 1)]
    joints = []
    for length, axis in zip(lift, axes):
        rot = flip if axis == (1, 0, 0) else quat.IDENTITY.copy()
        joints.append(Joint(axis=np.array(axis, dtype=float), offset=Pose((0.0, 0.0, length), rot)))
    return KinematicChain(joints=tuple(joints), tool_offset=Pose((0.0, 0.0, 0.06)))


def default_world() -> WorldLayout:
    """Two bottles on a table in front of the arm, mouth target at the
    user's position.  Desk-scale stand-in for the experimental scene."""
    upright = quat.IDENTITY.copy()
    grasp = Pose((0.0, 0.0, 0.08), quat.from_axis_angle((1.0, 0.0, 0.0), PI))
    top = Pose((0.0, 0.0, 0.10), upright)
    objects = {
        "water": WorldObject(
            label="water",
            pose=Pose((0.38, 0.15, 0.10), upright),
            grasp_offset=grasp,
            top_offset=top,
        ),
        "coke": WorldObject(
            label="coke",
            pose=Pose((0.38, -0.15, 0.10), upright),
            grasp_offset=grasp,
            top_offset=top,
        ),
    }
    mouth = Pose((0.28, 0.42, 0.35), upright)
    home_q = np.array([PI, PI - 0.5, PI, PI - 1.2, PI, PI - 1.4, PI])
    return WorldLayout(objects=objects, mouth=mouth, home_q=home_q)


def default_mission_params() -> MissionParams:
    return MissionParams()


# ---------------------------------------------------------------------------
# YAML loading


def _load_yaml(path):
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError("config file not found", path=str(path))
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"YAML parse error: {exc.problem}", path=str(path), line=line)


def _require(mapping, key, path, context=""):
    if not isinstance(mapping, dict) or key not in mapping:
        where = f" in {context}" if context else ""
        raise ConfigError(f"missing required key {key!r}{where}", path=str(path))
    return mapping[key]


def _pose_from_node(node, path, context) -> Pose:
    if node is None:
        return Pose.identity()
    position = node.get("origin", (0.0, 0.0, 0.0))
    if "quaternion" in node:
        orientation = np.asarray(node["quaternion"], dtype=float)
    else:
        rpy = node.get("rpy", (0.0, 0.0, 0.0))
        orientation = quat.from_rpy(*rpy)
    try:
        return Pose(position, orientation)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad pose for {context}: {exc}", path=str(path))


def load_chain(path) -> KinematicChain:
    data = _load_yaml(path)
    joints = []
    for i, node in enumerate(_require(data, "joints", path)):
        axis = _require(node, "axis", path, context=f"joint {i}")
        offset = _pose_from_node(node, path, f"joint {i}")
        try:
            joints.append(Joint(axis=np.asarray(axis, dtype=float), offset=offset))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad joint {i}: {exc}", path=str(path))
    tool = _pose_from_node(data.get("tool"), path, "tool")
    if not joints:
        raise ConfigError("chain has no joints", path=str(path))
    return KinematicChain(joints=tuple(joints), tool_offset=tool)


def load_world(path) -> WorldLayout:
    data = _load_yaml(path)
    objects = {}
    for name, node in _require(data, "objects", path).items():
        pose = _pose_from_node(node, path, f"object {name!r}")
        objects[name] = WorldObject(
            label=str(node.get("label", name)),
            pose=pose,
            graspable=bool(node.get("graspable", True)),
            grasp_offset=_pose_from_node(node.get("grasp_offset"), path, f"{name} grasp offset"),
            top_offset=_pose_from_node(node.get("top_offset"), path, f"{name} top offset"),
        )
    mouth = _pose_from_node(_require(data, "mouth", path), path, "mouth")
    home_q = np.asarray(_require(data, "home_q", path), dtype=float)
    return WorldLayout(objects=objects, mouth=mouth, home_q=home_q)


def _bounds_from_node(node, defaults: BoundsSpec, path) -> BoundsSpec:
    if node is None:
        return defaults
    spec = replace(
        defaults,
        lower=float(node.get("lower", defaults.lower)),
        upper=float(node.get("upper", defaults.upper)),
        buffer=float(node.get("buffer", defaults.buffer)),
        joint_index=node.get("joint_index", defaults.joint_index),
    )
    try:
        spec.to_bounds()
    except ValueError as exc:
        raise ConfigError(f"bad bounds: {exc}", path=str(path))
    return spec


def load_mission_params(path) -> MissionParams:
    data = _load_yaml(path) or {}
    base = MissionParams()
    control = data.get("control", {})
    gains = data.get("gains", {})
    bounds = data.get("bounds", {})
    waypoints = data.get("waypoints", {})
    tolerances = data.get("tolerances", {})
    return MissionParams(
        dt=float(control.get("dt", base.dt)),
        duration_cap=float(control.get("duration_cap", base.duration_cap)),
        velocity_cap=float(control.get("velocity_cap", base.velocity_cap)),
        damping=float(control.get("damping", base.damping)),
        max_active=int(control.get("max_active", base.max_active)),
        noise=float(control.get("noise", base.noise)),
        pose_gain=float(gains.get("pose", base.pose_gain)),
        limit_gain=float(gains.get("joint_limit", base.limit_gain)),
        obstacle_gain=float(gains.get("obstacle", base.obstacle_gain)),
        joint4_bounds=_bounds_from_node(bounds.get("joint4"), base.joint4_bounds, path),
        joint2_bounds=_bounds_from_node(bounds.get("joint2"), base.joint2_bounds, path),
        obstacle_bounds=_bounds_from_node(bounds.get("obstacle"), base.obstacle_bounds, path),
        approach_height=float(waypoints.get("approach_height", base.approach_height)),
        lift_height=float(waypoints.get("lift_height", base.lift_height)),
        place_left=tuple(waypoints.get("place_left", base.place_left)),
        place_right=tuple(waypoints.get("place_right", base.place_right)),
        mouth_offset=tuple(waypoints.get("mouth_offset", base.mouth_offset)),
        drink_tilt=float(waypoints.get("drink_tilt", base.drink_tilt)),
        position_tolerance=float(tolerances.get("position", base.position_tolerance)),
        orientation_tolerance=float(tolerances.get("orientation", base.orientation_tolerance)),
    )
