"""Serial-chain kinematics: forward kinematics, geometric Jacobians,
damped pseudoinverse and null-space projectors.

All quantities live in the base frame of the chain.  Rotations are unit
quaternions (see :mod:`armstack.quat`); a rigid transform is a
:class:`Pose`.  Every function here is pure, so values can be shared
freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import quat
from .errors import DimensionError

TOOL = "tool"
FrameIndex = Union[int, str]

_AXIS_TOL = 1e-12
_QUAT_TOL = 1e-12
_POSE_QUAT_TOL = 1e-9


def _frozen_array(values, shape) -> np.ndarray:
    a = np.array(values, dtype=float).reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform / frame: position in meters, orientation as a unit
    quaternion [w, x, y, z]."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: quat.IDENTITY.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_array(self.position, (3,)))
        q = _frozen_array(self.orientation, (4,))
        if abs(np.linalg.norm(q) - 1.0) > _POSE_QUAT_TOL:
            raise ValueError(f"orientation quaternion is not unit norm: {q}")
        object.__setattr__(self, "orientation", q)

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply `other` in this pose's frame."""
        return Pose(
            self.position + quat.rotate(self.orientation, other.position),
            quat.normalize(quat.multiply(self.orientation, other.orientation)),
        )

    def inverse(self) -> "Pose":
        q_inv = quat.conjugate(self.orientation)
        return Pose(-quat.rotate(q_inv, self.position), q_inv)

    def transform_point(self, p) -> np.ndarray:
        return self.position + quat.rotate(self.orientation, np.asarray(p, float))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), quat.IDENTITY.copy())


@dataclass(frozen=True)
class Joint:
    """One revolute joint: rotation axis (unit, in the joint's own frame)
    and the fixed transform from the parent frame to this frame."""

    axis: np.ndarray
    offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        a = _frozen_array(self.axis, (3,))
        if abs(np.linalg.norm(a) - 1.0) > _AXIS_TOL:
            raise ValueError(f"joint axis must have unit norm, got {a}")
        object.__setattr__(self, "axis", a)


@dataclass(frozen=True)
class KinematicChain:
    """Base-to-tool ordered revolute chain with a fixed tool transform."""

    joints: tuple[Joint, ...]
    tool_offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) < 1:
            raise ValueError("chain needs at least one joint")
        if abs(np.linalg.norm(self.tool_offset.orientation) - 1.0) > _QUAT_TOL:
            raise ValueError("tool offset rotation must be a unit quaternion")

    @property
    def n(self) -> int:
        return len(self.joints)

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise DimensionError(
                f"expected {self.n} joint angles, got shape {q.shape}"
            )
        return q


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen_array(self.q, (-1,)))
        object.__setattr__(self, "qdot", _frozen_array(self.qdot, (-1,)))
        if self.q.shape != self.qdot.shape:
            raise DimensionError("q and qdot must have the same length")


def frame_poses(chain: KinematicChain, q) -> tuple[Pose, ...]:
    """Pose of every joint frame (after its own rotation), base to last.

    Computed once per control tick and reused by every task evaluator.
    """
    q = chain.check_q(q)
    poses = []
    current = Pose.identity()
    for joint, angle in zip(chain.joints, q):
        current = current.compose(joint.offset).compose(
            Pose(np.zeros(3), quat.from_axis_angle(joint.axis, angle))
        )
        poses.append(current)
    return tuple(poses)


def _resolve_frame(chain: KinematicChain, frame: FrameIndex) -> int:
    if frame == TOOL:
        return chain.n - 1
    if not isinstance(frame, (int, np.integer)) or not 0 <= frame < chain.n:
        raise DimensionError(f"frame index {frame!r} out of range for n={chain.n}")
    return int(frame)


def forward_kinematics(
    chain: KinematicChain, q, frame: FrameIndex = TOOL, frames=None
) -> Pose:
    """Pose of the requested joint frame (or the tool point) in base
    coordinates.  `frames` may carry precomputed `frame_poses` output."""
    if frames is None:
        frames = frame_poses(chain, q)
    k = _resolve_frame(chain, frame)
    pose = frames[k]
    if frame == TOOL:
        pose = pose.compose(chain.tool_offset)
    return pose


def geometric_jacobian(
    chain: KinematicChain, q, point, frame: FrameIndex = TOOL, frames=None
) -> np.ndarray:
    """6×n geometric Jacobian of a point rigidly attached to `frame`.

    Rows 0–2 map joint rates to the linear velocity of `point` (base
    coordinates); rows 3–5 to the angular velocity of the frame.  Columns
    of joints past `frame` are zero.
    """
    if frames is None:
        frames = frame_poses(chain, q)
    else:
        chain.check_q(q)
    point = np.asarray(point, dtype=float)
    if point.shape != (3,):
        raise DimensionError(f"point must be a 3-vector, got shape {point.shape}")
    k = _resolve_frame(chain, frame)
    J = np.zeros((6, chain.n))
    for j in range(k + 1):
        axis_world = quat.rotate(frames[j].orientation, chain.joints[j].axis)
        origin = frames[j].position
        ax, ay, az = axis_world
        rx, ry, rz = point - origin
        # np.cross has heavy per-call overhead for single 3-vectors
        J[0, j] = ay * rz - az * ry
        J[1, j] = az * rx - ax * rz
        J[2, j] = ax * ry - ay * rx
        J[3:, j] = axis_world
    return J


def damped_pseudoinverse(J, damping: float = 0.0) -> np.ndarray:
    """Jᵀ(JJᵀ + λ²I)⁻¹ for λ > 0; the exact Moore-Penrose inverse for λ = 0
    (well-defined for rank-deficient J as well)."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if damping < 0.0:
        raise ValueError("damping must be nonnegative")
    if damping == 0.0:
        return np.linalg.pinv(J)
    m = J.shape[0]
    normal = J @ J.T + (damping * damping) * np.eye(m)
    return np.linalg.solve(normal, J).T


def null_space_projector(J_aug) -> np.ndarray:
    """N = I − J⁺J for the (stacked) Jacobian, using the exact pseudoinverse.

    N is symmetric, idempotent and annihilates the row space of J_aug.
    """
    J_aug = np.atleast_2d(np.asarray(J_aug, dtype=float))
    n = J_aug.shape[1]
    return np.eye(n) - np.linalg.pinv(J_aug) @ J_aug


def stack_jacobians(jacobians: Sequence[np.ndarray]) -> np.ndarray:
    """Vertical stack J_aug = [J_1ᵀ J_2ᵀ … J_iᵀ]ᵀ of same-width Jacobians."""
    mats = [np.atleast_2d(np.asarray(J, dtype=float)) for J in jacobians]
    widths = {m.shape[1] for m in mats}
    if len(widths) > 1:
        raise DimensionError(f"jacobians have mixed column counts: {sorted(widths)}")
    return np.vstack(mats)
