"""Task functions for the arm controller.

A task is a differentiable function of the joint vector whose value the
solver either regulates to a target (equality tasks) or keeps inside a
valid interval (set-based tasks).  Each evaluator returns a
:class:`TaskReading` with the current value and its Jacobian row(s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from . import quat
from .errors import DegenerateGradientError, DimensionError
from .kinematics import (
    TOOL,
    KinematicChain,
    Pose,
    forward_kinematics,
    frame_poses,
    geometric_jacobian,
)

TaskKind = Literal["equality", "set_based"]

# Activation buffers used when a config does not override them.
DEFAULT_JOINT_BUFFER = 0.1  # rad
DEFAULT_DISTANCE_BUFFER = 0.03  # m

_MIN_OBSTACLE_DISTANCE = 1e-6


@dataclass(frozen=True)
class SetBounds:
    """Five-threshold structure of a set-based task.

    ``lower``/``upper`` are the physical thresholds, ``buffer`` is the
    activation margin, and the safety values are the equality targets used
    while the task is active.  A missing side is represented by an
    infinite physical threshold (and an infinite safety value), which can
    never activate.
    """

    lower: float
    upper: float
    buffer: float
    safety_lower: float
    safety_upper: float

    def __post_init__(self):
        if not self.buffer > 0.0:
            raise ValueError("activation buffer must be positive")
        if not (math.isfinite(self.lower) or math.isfinite(self.upper)):
            raise ValueError("at least one physical threshold must be finite")
        if math.isfinite(self.lower):
            if not self.lower < self.safety_lower < self.lower + self.buffer:
                raise ValueError(
                    "lower safety value must sit strictly inside the lower buffer"
                )
        elif self.safety_lower != -math.inf:
            raise ValueError("unbounded lower side requires an infinite safety value")
        if math.isfinite(self.upper):
            if not self.upper - self.buffer < self.safety_upper < self.upper:
                raise ValueError(
                    "upper safety value must sit strictly inside the upper buffer"
                )
        elif self.safety_upper != math.inf:
            raise ValueError("unbounded upper side requires an infinite safety value")
        if math.isfinite(self.lower) and math.isfinite(self.upper):
            if not self.lower + self.buffer < self.upper - self.buffer:
                raise ValueError("activation thresholds must leave a valid interior")

    @property
    def activation_lower(self) -> float:
        return self.lower + self.buffer if math.isfinite(self.lower) else -math.inf

    @property
    def activation_upper(self) -> float:
        return self.upper - self.buffer if math.isfinite(self.upper) else math.inf

    @classmethod
    def with_midpoint_safety(
        cls, lower: float = -math.inf, upper: float = math.inf, buffer: float = DEFAULT_JOINT_BUFFER
    ) -> "SetBounds":
        """Safety values centered in the buffer zones, the default placement
        that maximizes the anti-chattering margin."""
        safety_lower = lower + buffer / 2.0 if math.isfinite(lower) else -math.inf
        safety_upper = upper - buffer / 2.0 if math.isfinite(upper) else math.inf
        return cls(lower, upper, buffer, safety_lower, safety_upper)


@dataclass(frozen=True)
class TaskReading:
    value: np.ndarray
    jacobian: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.value, dtype=float))
        J = np.atleast_2d(np.asarray(self.jacobian, dtype=float))
        if J.shape[0] != v.shape[0]:
            raise DimensionError(
                f"jacobian has {J.shape[0]} rows for a {v.shape[0]}-dim value"
            )
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "jacobian", J)


@dataclass(frozen=True)
class EvalContext:
    """Everything an evaluator may need for one control tick.

    Frame poses are computed once and shared by all tasks of the tick.
    ``tool_extensions`` maps controllable frame names ("tool",
    "bottle_top", ...) to their rigid offset from the tool frame;
    ``points`` maps obstacle ids to positions in base coordinates.
    """

    chain: KinematicChain
    q: np.ndarray
    frames: tuple[Pose, ...]
    tool_extensions: dict[str, Pose] = field(default_factory=dict)
    points: dict[str, np.ndarray] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def at(cls, chain, q, tool_extensions=None, points=None) -> "EvalContext":
        q = chain.check_q(q)
        return cls(
            chain=chain,
            q=q,
            frames=frame_poses(chain, q),
            tool_extensions=dict(tool_extensions or {}),
            points={k: np.asarray(v, dtype=float) for k, v in (points or {}).items()},
        )

    def frame_pose(self, name: str) -> Pose:
        pose = forward_kinematics(self.chain, self.q, frame=TOOL, frames=self.frames)
        if name != TOOL:
            pose = pose.compose(self.tool_extensions[name])
        return pose

    def frame_jacobian(self, name: str) -> tuple[Pose, np.ndarray]:
        """Pose and 6×n Jacobian of a controllable frame, computed at most
        once per tick (tasks often share the tool frame)."""
        if name not in self._cache:
            pose = self.frame_pose(name)
            J = geometric_jacobian(
                self.chain, self.q, point=pose.position, frame=TOOL, frames=self.frames
            )
            self._cache[name] = (pose, J)
        return self._cache[name]


@dataclass(frozen=True)
class TaskSpec:
    """One entry of a task hierarchy: what to evaluate and how to weigh it."""

    id: str
    kind: TaskKind
    dim: int
    gain: np.ndarray
    evaluator: str
    params: dict = field(default_factory=dict)
    bounds: Optional[SetBounds] = None

    def __post_init__(self):
        if self.kind not in ("equality", "set_based"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "set_based":
            if self.dim != 1:
                raise ValueError("set-based tasks must be scalar")
            if self.bounds is None:
                raise ValueError("set-based tasks need bounds")
        if self.evaluator not in EVALUATORS:
            raise ValueError(f"unknown evaluator {self.evaluator!r}")
        expected_dim = EVALUATORS[self.evaluator][0]
        if self.dim != expected_dim:
            raise ValueError(
                f"evaluator {self.evaluator!r} produces dim {expected_dim}, spec says {self.dim}"
            )
        K = np.atleast_2d(np.asarray(self.gain, dtype=float))
        if K.shape != (self.dim, self.dim):
            raise DimensionError(f"gain must be {self.dim}x{self.dim}, got {K.shape}")
        if np.max(np.abs(K - K.T)) > 1e-12 or np.min(np.linalg.eigvalsh(K)) <= 0.0:
            raise ValueError("gain matrix must be symmetric positive-definite")
        object.__setattr__(self, "gain", K)
        object.__setattr__(self, "params", dict(self.params))


def gain_matrix(gain, dim: int) -> np.ndarray:
    """Scalar or per-row diagonal shorthand for a gain matrix."""
    g = np.asarray(gain, dtype=float)
    if g.ndim == 0:
        return float(g) * np.eye(dim)
    if g.ndim == 1:
        if g.size != dim:
            raise DimensionError(f"need {dim} diagonal gains, got {g.size}")
        return np.diag(g)
    return g


# ---------------------------------------------------------------------------
# Evaluators


def joint_value_task(ctx: EvalContext, joint_index: int) -> TaskReading:
    n = ctx.chain.n
    if not 0 <= joint_index < n:
        raise DimensionError(f"joint index {joint_index} out of range for n={n}")
    row = np.zeros((1, n))
    row[0, joint_index] = 1.0
    return TaskReading(value=np.array([ctx.q[joint_index]]), jacobian=row)


def obstacle_distance_task(
    ctx: EvalContext, control_frame=TOOL, obstacle=None
) -> TaskReading:
    p_obs = ctx.points[obstacle] if isinstance(obstacle, str) else np.asarray(obstacle, float)
    if not np.all(np.isfinite(p_obs)):
        raise ValueError("obstacle position must be finite")
    if control_frame in (TOOL, *ctx.tool_extensions):
        pose, J = ctx.frame_jacobian(control_frame)
        p = pose.position
    else:
        p = forward_kinematics(ctx.chain, ctx.q, frame=control_frame, frames=ctx.frames).position
        J = geometric_jacobian(ctx.chain, ctx.q, point=p, frame=control_frame, frames=ctx.frames)
    diff = p - p_obs
    distance = float(np.linalg.norm(diff))
    if distance < _MIN_OBSTACLE_DISTANCE:
        raise DegenerateGradientError(
            f"control point within {_MIN_OBSTACLE_DISTANCE} m of the obstacle"
        )
    row = (diff / distance) @ J[:3]
    return TaskReading(value=np.array([distance]), jacobian=row.reshape(1, -1))


def _extended_tool(ctx: EvalContext, frame: str) -> tuple[Pose, np.ndarray]:
    return ctx.frame_jacobian(frame)


def position_task(ctx: EvalContext, frame: str = TOOL, target=None) -> TaskReading:
    pose, J = _extended_tool(ctx, frame)
    return TaskReading(value=pose.position.copy(), jacobian=J[:3])


def orientation_task(ctx: EvalContext, frame: str = TOOL, target=None) -> TaskReading:
    """Value is the orientation error vector toward the target quaternion."""
    if target is None:
        raise ValueError("orientation task needs a desired quaternion")
    desired = np.asarray(target, dtype=float)
    if abs(np.linalg.norm(desired) - 1.0) > 1e-9:
        raise ValueError("desired orientation must be a unit quaternion")
    pose, J = _extended_tool(ctx, frame)
    return TaskReading(
        value=quat.error_vector(desired, pose.orientation), jacobian=J[3:]
    )


def pose_task(ctx: EvalContext, frame: str = TOOL, target: Pose = None) -> TaskReading:
    """Six-dimensional frame pose task: current position stacked on the
    orientation error toward the target pose."""
    if target is None:
        raise ValueError("pose task needs a target Pose")
    pose, J = _extended_tool(ctx, frame)
    value = np.concatenate([pose.position, quat.error_vector(target.orientation, pose.orientation)])
    return TaskReading(value=value, jacobian=J)


def manipulability_task(ctx: EvalContext, rows=None, gradient_step: float = 1e-6) -> TaskReading:
    """sqrt(det(J Jᵀ)) of the tool Jacobian (optionally a row subset);
    the gradient row comes from central finite differences."""
    rows = list(range(6)) if rows is None else list(rows)

    def value_at(qq):
        frames = frame_poses(ctx.chain, qq)
        tip = forward_kinematics(ctx.chain, qq, frames=frames).position
        J = geometric_jacobian(ctx.chain, qq, point=tip, frames=frames)[rows]
        return math.sqrt(max(np.linalg.det(J @ J.T), 0.0))

    n = ctx.chain.n
    grad = np.zeros((1, n))
    for j in range(n):
        dq = np.zeros(n)
        dq[j] = gradient_step
        grad[0, j] = (value_at(ctx.q + dq) - value_at(ctx.q - dq)) / (2.0 * gradient_step)
    return TaskReading(value=np.array([value_at(ctx.q)]), jacobian=grad)


EVALUATORS = {
    "joint_value": (1, joint_value_task),
    "obstacle_distance": (1, obstacle_distance_task),
    "position": (3, position_task),
    "orientation": (3, orientation_task),
    "pose": (6, pose_task),
    "manipulability": (1, manipulability_task),
}

_TARGET_AWARE = {"orientation", "pose"}


def evaluate_task(spec: TaskSpec, ctx: EvalContext, target=None) -> TaskReading:
    _, fn = EVALUATORS[spec.evaluator]
    if spec.evaluator in _TARGET_AWARE:
        return fn(ctx, target=target, **spec.params)
    return fn(ctx, **spec.params)


def task_error(spec: TaskSpec, reading: TaskReading, target) -> np.ndarray:
    """Tracking error the solver feeds through the gain.

    For orientation-bearing tasks the reading already encodes the error
    toward the target, so no subtraction is needed there.
    """
    if spec.evaluator == "orientation":
        return reading.value.copy()
    if spec.evaluator == "pose":
        return np.concatenate([target.position - reading.value[:3], reading.value[3:]])
    return np.atleast_1d(np.asarray(target, dtype=float)) - reading.value
