"""Deterministic kinematic world: explicit-Euler joint integration,
object poses, synthetic perception and grasp attachment.

The world is a pure value; every mutation returns a new snapshot, so
states can be published to other threads without locking and replaying a
command sequence reproduces every pose bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .config import WorldLayout, WorldObject
from .errors import GraspFailureError, UnknownObjectError
from .kinematics import JointState, KinematicChain, Pose, forward_kinematics
from .quat import rotation_angle
from .tasks import EvalContext

ATTACH_POSITION_TOL = 0.02  # m
ATTACH_ORIENTATION_TOL = 0.15  # rad


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    duration_cap: float = 120.0
    velocity_cap: float = 0.8
    noise: float = 0.0

    def __post_init__(self):
        if self.dt <= 0.0 or self.duration_cap <= 0.0 or self.velocity_cap <= 0.0:
            raise ValueError("dt, duration cap and velocity cap must be positive")
        if self.noise < 0.0:
            raise ValueError("noise amplitude must be nonnegative")


@dataclass(frozen=True)
class Attachment:
    object_id: str
    tool_to_object: Pose  # relative transform frozen at grasp time


@dataclass(frozen=True)
class WorldState:
    arm: JointState
    objects: dict[str, WorldObject]
    mouth: Pose
    attachment: Optional[Attachment] = None
    clock: float = 0.0

    def object(self, object_id: str) -> WorldObject:
        try:
            return self.objects[object_id]
        except KeyError:
            raise UnknownObjectError(f"no object {object_id!r} in the world") from None


@dataclass(frozen=True)
class Perception:
    """Snapshot of object and mouth poses as the controller sees them."""

    objects: dict[str, Pose]
    mouth: Pose

    def object_pose(self, object_id: str) -> Pose:
        try:
            return self.objects[object_id]
        except KeyError:
            raise UnknownObjectError(f"no object {object_id!r} in the snapshot") from None


def initial_world(layout: WorldLayout) -> WorldState:
    n = layout.home_q.size
    return WorldState(
        arm=JointState(q=layout.home_q.copy(), qdot=np.zeros(n)),
        objects=dict(layout.objects),
        mouth=layout.mouth,
        attachment=None,
        clock=0.0,
    )


def step(world: WorldState, qdot, config: SimConfig, chain: KinematicChain) -> WorldState:
    """Integrate one control period and carry any attached object along."""
    qdot = np.asarray(qdot, dtype=float)
    chain.check_q(qdot)
    if not np.all(np.isfinite(qdot)):
        raise ValueError("joint velocity must be finite")
    q_next = world.arm.q + qdot * config.dt
    objects = world.objects
    if world.attachment is not None:
        tool = forward_kinematics(chain, q_next)
        carried = world.object(world.attachment.object_id)
        objects = dict(objects)
        objects[world.attachment.object_id] = replace(
            carried, pose=tool.compose(world.attachment.tool_to_object)
        )
    return WorldState(
        arm=JointState(q=q_next, qdot=qdot),
        objects=objects,
        mouth=world.mouth,
        attachment=world.attachment,
        clock=world.clock + config.dt,
    )


def perceive(
    world: WorldState, config: SimConfig, rng: Optional[np.random.Generator] = None
) -> Perception:
    """Object and mouth poses, optionally perturbed by zero-mean uniform
    position noise.  Noiseless mode returns the ground truth."""

    def jitter(pose: Pose) -> Pose:
        if config.noise == 0.0 or rng is None:
            return pose
        return Pose(
            pose.position + rng.uniform(-config.noise, config.noise, size=3),
            pose.orientation,
        )

    return Perception(
        objects={oid: jitter(obj.pose) for oid, obj in world.objects.items()},
        mouth=jitter(world.mouth),
    )


def grasp_pose(obj: WorldObject) -> Pose:
    """Target tool pose for grasping the object."""
    return obj.pose.compose(obj.grasp_offset)


def attach(world: WorldState, chain: KinematicChain, object_id: str) -> WorldState:
    obj = world.object(object_id)
    if not obj.graspable:
        raise GraspFailureError(f"object {object_id!r} is not graspable")
    if world.attachment is not None:
        raise GraspFailureError("another object is already attached")
    tool = forward_kinematics(chain, world.arm.q)
    target = grasp_pose(obj)
    position_error = float(np.linalg.norm(tool.position - target.position))
    orientation_error = rotation_angle(tool.orientation, target.orientation)
    if position_error > ATTACH_POSITION_TOL or orientation_error > ATTACH_ORIENTATION_TOL:
        raise GraspFailureError(
            f"tool is {position_error * 100:.1f} cm / {orientation_error:.3f} rad "
            f"away from the grasp pose of {object_id!r}"
        )
    relative = tool.inverse().compose(obj.pose)
    return replace(world, attachment=Attachment(object_id, relative))


def detach(world: WorldState) -> WorldState:
    if world.attachment is None:
        raise GraspFailureError("nothing is attached")
    return replace(world, attachment=None)


def carried_top_offset(world: WorldState) -> Optional[Pose]:
    """Offset of the carried object's top frame from the tool, or None."""
    if world.attachment is None:
        return None
    obj = world.object(world.attachment.object_id)
    return world.attachment.tool_to_object.compose(obj.top_offset)


def eval_context(
    chain: KinematicChain, world: WorldState, perception: Optional[Perception] = None
) -> EvalContext:
    """Task-evaluation context for the current tick.

    Obstacle points come from the perception snapshot when one is given
    (the controller's view), otherwise from ground truth.
    """
    if perception is None:
        perception = perceive(world, SimConfig())
    extensions = {}
    top = carried_top_offset(world)
    if top is not None:
        extensions["bottle_top"] = top
    points = {oid: pose.position for oid, pose in perception.objects.items()}
    points["mouth"] = perception.mouth.position
    return EvalContext.at(chain, world.arm.q, tool_extensions=extensions, points=points)
