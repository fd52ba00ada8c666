"""
Deterministic desk-scale tabletop.

A gripper translates over a unit table (height up to 0.5) with one
manipulated object and a fixed target. Observations are top-down Gaussian
blob renders of gripper, object and target plus the gripper height and the
gripper-closed bit. States are immutable value objects; every transition
returns a new state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from equirecover.errors import InputError, ShapeError

logger = logging.getLogger(__name__)

WORKSPACE_LOW = np.array([0.0, 0.0, 0.0])
WORKSPACE_HIGH = np.array([1.0, 1.0, 0.5])

STEP_CLIP = 0.05
GRASP_RADIUS = 0.03
CONTACT_RADIUS = 0.04
TARGET_RADIUS = 0.05
MAX_EPISODE_STEPS = 200
IMAGE_SIZE = 16
N_CHANNELS = 3
N_EXTRAS = 2

TARGET_POSITION = (0.75, 0.5, 0.0)
GRIPPER_START = (0.25, 0.5, 0.3)
OBJECT_X_RANGE = (0.05, 0.45)
OBJECT_Y_RANGE = (0.1, 0.9)


class TaskKind(str, Enum):
    PICK_AND_DROP = "pick_and_drop"
    PUSH = "push"


class GripperCommand(str, Enum):
    OPEN = "open"
    CLOSE = "close"


def _frozen_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.shape != (3,):
        raise ShapeError(f"expected a 3-vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EnvState:
    gripper_pos: np.ndarray
    object_pos: np.ndarray
    target_pos: np.ndarray
    attached: bool
    gripper_closed: bool
    task_kind: TaskKind

    def __post_init__(self):
        for name in ("gripper_pos", "object_pos", "target_pos"):
            object.__setattr__(self, name, _frozen_vector(getattr(self, name)))
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))


@dataclass(frozen=True, eq=False)
class Action:
    delta: np.ndarray
    gripper_cmd: GripperCommand = GripperCommand.OPEN

    def __post_init__(self):
        object.__setattr__(self, "delta", _frozen_vector(self.delta))
        object.__setattr__(self, "gripper_cmd", GripperCommand(self.gripper_cmd))


@dataclass(frozen=True)
class SuccessFlags:
    grasped: bool = False
    completed: bool = False


def clip_delta(delta) -> np.ndarray:
    return np.clip(np.asarray(delta, dtype=np.float64), -STEP_CLIP, STEP_CLIP)


def clip_to_workspace(position) -> np.ndarray:
    return np.clip(np.asarray(position, dtype=np.float64), WORKSPACE_LOW, WORKSPACE_HIGH)


def planar_distance(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def observation_length(image_size: int = IMAGE_SIZE) -> int:
    return N_CHANNELS * image_size * image_size + N_EXTRAS


def reset(rng: np.random.Generator, task_kind: TaskKind | str) -> EnvState:
    task_kind = TaskKind(task_kind)
    object_pos = (
        rng.uniform(*OBJECT_X_RANGE),
        rng.uniform(*OBJECT_Y_RANGE),
        0.0,
    )
    return EnvState(
        gripper_pos=GRIPPER_START,
        object_pos=object_pos,
        target_pos=TARGET_POSITION,
        attached=False,
        gripper_closed=task_kind is TaskKind.PUSH,
        task_kind=task_kind,
    )


def step(state: EnvState, action: Action) -> EnvState:
    """Apply one clipped translation and, for pick-and-drop, the gripper command."""
    delta = np.asarray(action.delta, dtype=np.float64)
    if not np.all(np.isfinite(delta)):
        raise InputError(f"action delta must be finite, got {delta}")

    gripper = clip_to_workspace(state.gripper_pos + clip_delta(delta))
    moved = gripper - state.gripper_pos
    obj = state.object_pos.copy()
    attached = state.attached
    closed = state.gripper_closed

    if state.task_kind is TaskKind.PUSH:
        closed = True
        if np.linalg.norm(gripper - obj) < CONTACT_RADIUS:
            obj = clip_to_workspace(obj + np.array([moved[0], moved[1], 0.0]))
    elif action.gripper_cmd is GripperCommand.CLOSE:
        # grasping needs an open -> close transition
        if not closed and np.linalg.norm(gripper - obj) <= GRASP_RADIUS:
            attached = True
        closed = True
    else:
        if attached:
            obj = np.array([gripper[0], gripper[1], 0.0])
            attached = False
        closed = False

    if attached:
        obj = gripper.copy()

    return replace(state, gripper_pos=gripper, object_pos=obj, attached=attached, gripper_closed=closed)


def _pixel_centers(image_size: int) -> np.ndarray:
    return (np.arange(image_size) + 0.5) / image_size


def render(state: EnvState, image_size: int = IMAGE_SIZE) -> np.ndarray:
    """Flattened (K, K, 3) blob image (rows follow y, columns follow x) plus [z, closed]."""
    centers = _pixel_centers(image_size)
    cx = centers[None, :]
    cy = centers[:, None]
    two_sigma_sq = 2.0 * (1.5 / image_size) ** 2

    channels = []
    for pos in (state.gripper_pos, state.object_pos, state.target_pos):
        channels.append(np.exp(-((cx - pos[0]) ** 2 + (cy - pos[1]) ** 2) / two_sigma_sq))
    image = np.stack(channels, axis=-1)
    extras = np.array([state.gripper_pos[2], 1.0 if state.gripper_closed else 0.0])
    return np.concatenate([image.ravel(), extras])


def split_observation(observation, image_size: int = IMAGE_SIZE) -> tuple[np.ndarray, np.ndarray]:
    observation = np.asarray(observation, dtype=np.float64)
    if observation.shape[-1] != observation_length(image_size):
        raise ShapeError(
            f"observation length {observation.shape[-1]} does not match image size {image_size}"
        )
    n_pixels = N_CHANNELS * image_size * image_size
    image = observation[..., :n_pixels].reshape(observation.shape[:-1] + (image_size, image_size, N_CHANNELS))
    return image, observation[..., n_pixels:]


def gripper_closed_bit(observation) -> float:
    return float(np.asarray(observation)[..., -1])


def hold_command(observation) -> GripperCommand:
    return GripperCommand.CLOSE if gripper_closed_bit(observation) > 0.5 else GripperCommand.OPEN


def success_flags(state: EnvState, ever_attached: bool = False) -> SuccessFlags:
    """``ever_attached`` is tracked by the caller across the episode."""
    near_target = planar_distance(state.object_pos, state.target_pos) <= TARGET_RADIUS
    if state.task_kind is TaskKind.PUSH:
        return SuccessFlags(grasped=False, completed=near_target)
    completed = near_target and not state.gripper_closed and not state.attached
    return SuccessFlags(grasped=ever_attached or state.attached, completed=completed)


def perturb(state: EnvState, magnitude: float, rng: np.random.Generator) -> EnvState:
    """Teleport the gripper by ``magnitude`` in a uniformly random direction."""
    if not np.isfinite(magnitude) or magnitude < 0.0:
        raise InputError(f"perturbation magnitude must be a non-negative number, got {magnitude}")
    if magnitude == 0.0:
        return state

    direction = rng.normal(size=3)
    while np.linalg.norm(direction) == 0.0:
        direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)

    gripper = clip_to_workspace(state.gripper_pos + magnitude * direction)
    obj = gripper.copy() if state.attached else state.object_pos
    logger.debug("Perturbed gripper from %s to %s", state.gripper_pos, gripper)
    return replace(state, gripper_pos=gripper, object_pos=obj)
