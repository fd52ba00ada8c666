"""
Scripted demonstrator for both tabletop tasks.

The expert is a waypoint phase machine. Each motion phase moves toward its
waypoint by the clipped difference vector plus optional Gaussian noise;
gripper phases issue a command with a zero translation. Descent and
transport slow to short steps near their goal, so the last motion before a
gripper change is small.
"""

from __future__ import annotations

import logging
from enum import Enum

import numpy as np

from equirecover.env import (
    CONTACT_RADIUS,
    STEP_CLIP,
    TARGET_RADIUS,
    Action,
    EnvState,
    GripperCommand,
    TaskKind,
    clip_delta,
    planar_distance,
)
from equirecover.errors import InputError

logger = logging.getLogger(__name__)

LIFT_HEIGHT = 0.15
ALIGN_TOL = 0.01
DESCENT_CAPTURE = 0.03
GRASP_TOL = 0.015
PUSH_OFFSET = 0.03
PUSH_STEP = 0.03
CONTACT_HEIGHT = 0.02
# the last FINE_RADIUS of a descent or transport is covered in FINE_STEP moves
FINE_RADIUS = 0.05
FINE_STEP = 0.01


class ExpertPhase(str, Enum):
    APPROACH = "approach"
    DESCEND = "descend"
    GRASP = "grasp"
    LIFT = "lift"
    TRANSPORT = "transport"
    RELEASE = "release"
    RISE = "rise"
    PUSH = "push"
    DONE = "done"


# (phase, waypoint or None for gripper-only steps, gripper command)
Plan = tuple[ExpertPhase, "np.ndarray | None", GripperCommand]


def _lifted(xy, height: float = LIFT_HEIGHT) -> np.ndarray:
    return np.array([xy[0], xy[1], height])


def _toward(gripper: np.ndarray, goal: np.ndarray, max_step: float) -> np.ndarray:
    offset = goal - gripper
    distance = np.linalg.norm(offset)
    if distance <= max_step:
        return goal
    return gripper + max_step * offset / distance


def _slow_near(gripper: np.ndarray, goal: np.ndarray, distance: float) -> np.ndarray:
    """Waypoint for a move that enters the fine zone around ``goal`` at its edge."""
    reach = max(FINE_STEP, distance - FINE_RADIUS + FINE_STEP)
    if reach >= STEP_CLIP:
        return goal
    return _toward(gripper, goal, reach)


def _captured(gripper: np.ndarray, point_xy) -> bool:
    """Above ``point_xy`` closely enough to start (or keep) a vertical descent."""
    d_xy = planar_distance(gripper, point_xy)
    return d_xy <= ALIGN_TOL or (d_xy <= DESCENT_CAPTURE and gripper[2] < LIFT_HEIGHT - ALIGN_TOL)


def plan_pick_and_place(state: EnvState, place_xy) -> Plan:
    """Next step of a grasp, carry and drop cycle that ends with the object at ``place_xy``."""
    g = state.gripper_pos
    o = state.object_pos

    if state.attached:
        if planar_distance(g, place_xy) <= ALIGN_TOL:
            return ExpertPhase.RELEASE, None, GripperCommand.OPEN
        if g[2] < LIFT_HEIGHT - ALIGN_TOL:
            return ExpertPhase.LIFT, _lifted(g), GripperCommand.CLOSE
        waypoint = _slow_near(g, _lifted(place_xy), planar_distance(g, place_xy))
        return ExpertPhase.TRANSPORT, waypoint, GripperCommand.CLOSE

    if planar_distance(o, place_xy) <= TARGET_RADIUS:
        return ExpertPhase.DONE, None, GripperCommand.OPEN
    if state.gripper_closed:
        # closed on nothing
        return ExpertPhase.RELEASE, None, GripperCommand.OPEN
    if _captured(g, o):
        if np.linalg.norm(g - o) <= GRASP_TOL:
            return ExpertPhase.GRASP, None, GripperCommand.CLOSE
        bottom = np.array([o[0], o[1], 0.0])
        waypoint = _slow_near(g, bottom, float(np.linalg.norm(g - bottom)))
        return ExpertPhase.DESCEND, waypoint, GripperCommand.OPEN
    return ExpertPhase.APPROACH, _lifted(o), GripperCommand.OPEN


def plan_push(state: EnvState) -> Plan:
    g = state.gripper_pos
    o = state.object_pos
    t = state.target_pos

    if planar_distance(o, t) <= TARGET_RADIUS:
        return ExpertPhase.DONE, None, GripperCommand.CLOSE

    heading = np.array([t[0] - o[0], t[1] - o[1]])
    heading /= np.linalg.norm(heading)
    behind = o[:2] - PUSH_OFFSET * heading

    if np.linalg.norm(g - o) < CONTACT_RADIUS and g[2] <= CONTACT_HEIGHT:
        # contact is tested after the move, so the step along the heading
        # must leave the gripper within CONTACT_RADIUS of the object
        goal = g[:2] + PUSH_STEP * heading
        return ExpertPhase.PUSH, np.array([goal[0], goal[1], 0.0]), GripperCommand.CLOSE
    if _captured(g, behind):
        return ExpertPhase.DESCEND, np.array([behind[0], behind[1], 0.0]), GripperCommand.CLOSE
    if g[2] < LIFT_HEIGHT - ALIGN_TOL:
        return ExpertPhase.RISE, _lifted(g), GripperCommand.CLOSE
    return ExpertPhase.APPROACH, _lifted(behind), GripperCommand.CLOSE


def plan(state: EnvState) -> Plan:
    if state.task_kind is TaskKind.PUSH:
        return plan_push(state)
    return plan_pick_and_place(state, state.target_pos[:2])


def expert_phase(state: EnvState) -> ExpertPhase:
    return plan(state)[0]


def plan_to_action(
    state: EnvState,
    planned: Plan,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Action:
    _, waypoint, command = planned
    if waypoint is None:
        return Action(delta=np.zeros(3), gripper_cmd=command)

    delta = clip_delta(waypoint - state.gripper_pos)
    if noise_std > 0.0:
        if rng is None:
            raise InputError("a random generator is required when noise_std > 0")
        delta = clip_delta(delta + rng.normal(0.0, noise_std, size=3))
    return Action(delta=delta, gripper_cmd=command)


def scripted_expert(
    state: EnvState,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Action:
    """Expert action for ``state``.

    Motion deltas never exceed the environment step clip, noise included.
    """
    return plan_to_action(state, plan(state), noise_std, rng)
