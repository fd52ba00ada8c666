"""
Transition datasets: collection, corruption and JSON Lines storage.

A ``Dataset`` is an ordered list of trajectories, each holding its initial
observation and a chain of steps in which the ``next_observation`` of step t
is the same array as the ``observation`` of step t+1.

Files are JSON Lines: the first line is the metadata record, every further
line is one trajectory record
``{"initial_observation": [...], "steps": [{"obs", "action", "gripper_cmd", "next_obs"}]}``.
Floats are written with ``repr`` precision, so a read-back is bit-exact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator

import numpy as np
from tqdm import tqdm

from equirecover import env as tabletop
from equirecover.env import Action, EnvState, GripperCommand, TaskKind
from equirecover.errors import CollectionError, FormatError, InputError
from equirecover.expert import ExpertPhase, plan_pick_and_place, plan_to_action, scripted_expert

logger = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.10

# exploration
COVERAGE_GRID = (8, 8, 4)
WALL_MARGIN = 0.01
SMOOTHING = 0.3
WALK_NOISE = 0.01
TOGGLE_PROBABILITY = 0.03
CARRY_EVERY = 120
CARRY_MAX_STEPS = 60
RETARGET_AFTER = 20
# object hops to a uniform table position between walk steps
RELOCATE_PROBABILITY = 0.15
RELOCATE_RANGE = (0.05, 0.95)


class CollectionKind(str, Enum):
    DEMO = "demo"
    EXPLORE = "explore"


@dataclass(frozen=True)
class DatasetMetadata:
    task_kind: TaskKind
    seed: int
    collection_kind: CollectionKind
    noise_std: float = 0.0
    shifted: bool = False

    def to_record(self) -> dict:
        return {
            "task_kind": self.task_kind.value,
            "seed": int(self.seed),
            "collection_kind": self.collection_kind.value,
            "noise_std": float(self.noise_std),
            "shifted": bool(self.shifted),
        }

    @classmethod
    def from_record(cls, record: dict) -> "DatasetMetadata":
        try:
            return cls(
                task_kind=TaskKind(record["task_kind"]),
                seed=int(record["seed"]),
                collection_kind=CollectionKind(record["collection_kind"]),
                noise_std=float(record.get("noise_std", 0.0)),
                shifted=bool(record.get("shifted", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed metadata record: {exc}") from exc


@dataclass(eq=False)
class Step:
    observation: np.ndarray
    action: np.ndarray
    gripper_cmd: GripperCommand
    next_observation: np.ndarray


@dataclass(eq=False)
class Trajectory:
    initial_observation: np.ndarray
    steps: list[Step] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def chain_is_consistent(self) -> bool:
        return all(
            np.array_equal(a.next_observation, b.observation) for a, b in zip(self.steps[:-1], self.steps[1:])
        )


@dataclass
class Transitions:
    """Dataset flattened to aligned arrays, one row per step."""

    observations: np.ndarray
    actions: np.ndarray
    gripper_labels: np.ndarray
    next_observations: np.ndarray
    trajectory_index: np.ndarray
    initial_observations: np.ndarray

    def __len__(self) -> int:
        return self.observations.shape[0]

    def initial_for_steps(self) -> np.ndarray:
        return self.initial_observations[self.trajectory_index]


@dataclass(eq=False)
class Dataset:
    trajectories: list[Trajectory]
    metadata: DatasetMetadata

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.trajectories[i] for i in indices], self.metadata)

    def transitions(self) -> Transitions:
        if self.n_steps == 0:
            raise InputError("dataset has no steps")
        steps = [s for t in self.trajectories for s in t.steps]
        return Transitions(
            observations=np.stack([s.observation for s in steps]),
            actions=np.stack([s.action for s in steps]),
            gripper_labels=np.array([1.0 if s.gripper_cmd is GripperCommand.CLOSE else 0.0 for s in steps]),
            next_observations=np.stack([s.next_observation for s in steps]),
            trajectory_index=np.concatenate(
                [np.full(len(t), k, dtype=np.int64) for k, t in enumerate(self.trajectories)]
            ),
            initial_observations=np.stack([t.initial_observation for t in self.trajectories]),
        )


def _record_step(trajectory: Trajectory, observation: np.ndarray, executed: np.ndarray,
                 command: GripperCommand, next_state: EnvState) -> np.ndarray:
    next_observation = tabletop.render(next_state)
    trajectory.steps.append(Step(observation, executed, command, next_observation))
    return next_observation


def collect_demos(
    n_traj: int,
    task_kind: TaskKind | str,
    noise_std: float = 0.005,
    seed: int = 0,
    max_steps: int = tabletop.MAX_EPISODE_STEPS,
    progress: bool = False,
) -> Dataset:
    """Roll the scripted expert from random resets until success or the step cap."""
    if n_traj < 1:
        raise InputError(f"n_traj must be at least 1, got {n_traj}")
    task_kind = TaskKind(task_kind)
    rng = np.random.default_rng(seed)

    trajectories = []
    failures = 0
    for _ in tqdm(range(n_traj), desc=f"demos[{task_kind.value}]", disable=not progress):
        state = tabletop.reset(rng, task_kind)
        observation = tabletop.render(state)
        trajectory = Trajectory(initial_observation=observation)
        ever_attached = False
        completed = False
        for _ in range(max_steps):
            action = scripted_expert(state, noise_std, rng)
            next_state = tabletop.step(state, action)
            executed = next_state.gripper_pos - state.gripper_pos
            observation = _record_step(trajectory, observation, executed, action.gripper_cmd, next_state)
            state = next_state
            ever_attached = ever_attached or state.attached
            if tabletop.success_flags(state, ever_attached).completed:
                completed = True
                break
        if completed:
            trajectories.append(trajectory)
        else:
            failures += 1

    if failures:
        logger.warning("Dropped %d of %d %s demonstrations that did not complete", failures, n_traj, task_kind.value)
    if failures > MAX_FAILURE_RATE * n_traj:
        raise CollectionError(
            f"expert failed on {failures} of {n_traj} {task_kind.value} trajectories "
            f"(limit {MAX_FAILURE_RATE:.0%})"
        )

    dataset = Dataset(
        trajectories,
        DatasetMetadata(task_kind, seed, CollectionKind.DEMO, noise_std=noise_std),
    )
    logger.info("Collected %d %s demonstrations, %d steps", len(dataset), task_kind.value, dataset.n_steps)
    return dataset


class _CoverageMap:
    """Visit counts over a regular grid of the gripper workspace."""

    def __init__(self, shape=COVERAGE_GRID):
        self.shape = tuple(shape)
        self.counts = np.zeros(self.shape, dtype=np.int64)
        span = tabletop.WORKSPACE_HIGH - tabletop.WORKSPACE_LOW
        self.cell_size = span / np.array(self.shape)
        axes = [tabletop.WORKSPACE_LOW[d] + (np.arange(n) + 0.5) * self.cell_size[d] for d, n in enumerate(self.shape)]
        self.centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    def cell(self, position) -> tuple[int, ...]:
        rel = (np.asarray(position) - tabletop.WORKSPACE_LOW) / self.cell_size
        idx = np.clip(np.floor(rel).astype(int), 0, np.array(self.shape) - 1)
        return tuple(int(i) for i in idx)

    def visit(self, position) -> None:
        self.counts[self.cell(position)] += 1

    def least_visited_near(self, position) -> np.ndarray:
        flat = self.counts.ravel()
        candidates = np.flatnonzero(flat == flat.min())
        distances = np.linalg.norm(self.centers[candidates] - np.asarray(position), axis=1)
        return self.centers[candidates[np.argmin(distances)]]


def occupancy(dataset: Dataset, shape=COVERAGE_GRID) -> np.ndarray:
    """Visit histogram of gripper positions recovered from the state trace."""
    coverage = _CoverageMap(shape)
    for trajectory in dataset:
        position = np.array(tabletop.GRIPPER_START)
        coverage.visit(position)
        for s in trajectory.steps:
            position = position + s.action
            coverage.visit(position)
    return coverage.counts


def _keep_off_walls(position: np.ndarray, delta: np.ndarray) -> np.ndarray:
    low = tabletop.WORKSPACE_LOW + WALL_MARGIN
    high = tabletop.WORKSPACE_HIGH - WALL_MARGIN
    return np.clip(position + delta, low, high) - position


def collect_explore(
    n_traj: int = 6,
    steps_per_traj: int = 290,
    seed: int = 0,
    progress: bool = False,
) -> Dataset:
    """Task-agnostic exploration for encoder training.

    The gripper follows a low-pass filtered Gaussian walk steered toward the
    nearest least-visited workspace cell, toggles the gripper at random and
    periodically runs a scripted grasp-and-carry segment to a random place
    point. Between walk steps a loose object is sometimes moved to a fresh
    table position, so the same gripper displacement is seen with the object
    in many places. Recorded actions are the executed gripper displacements.
    """
    if n_traj < 1:
        raise InputError(f"n_traj must be at least 1, got {n_traj}")
    rng = np.random.default_rng(seed)
    coverage = _CoverageMap()

    trajectories = []
    for _ in tqdm(range(n_traj), desc="explore", disable=not progress):
        state = tabletop.reset(rng, TaskKind.PICK_AND_DROP)
        observation = tabletop.render(state)
        trajectory = Trajectory(initial_observation=observation)
        coverage.visit(state.gripper_pos)

        velocity = np.zeros(3)
        closed_cmd = False
        goal = coverage.least_visited_near(state.gripper_pos)
        since_goal = 0
        carry_steps = 0
        place_xy = None

        for t in range(steps_per_traj):
            if place_xy is None and t > 0 and t % CARRY_EVERY == 0:
                place_xy = rng.uniform(0.1, 0.9, size=2)
                carry_steps = 0

            if place_xy is not None:
                planned = plan_pick_and_place(state, place_xy)
                if planned[0] is ExpertPhase.DONE or carry_steps >= CARRY_MAX_STEPS:
                    place_xy = None
                    closed_cmd = state.gripper_closed
                    velocity = np.zeros(3)
                else:
                    action = plan_to_action(state, planned)
                    carry_steps += 1

            if place_xy is None:
                if coverage.cell(state.gripper_pos) == coverage.cell(goal) or since_goal >= RETARGET_AFTER:
                    goal = coverage.least_visited_near(state.gripper_pos)
                    since_goal = 0
                drive = tabletop.clip_delta(goal - state.gripper_pos) + rng.normal(0.0, WALK_NOISE, size=3)
                velocity = SMOOTHING * velocity + (1.0 - SMOOTHING) * drive
                if rng.random() < TOGGLE_PROBABILITY:
                    closed_cmd = not closed_cmd
                command = GripperCommand.CLOSE if closed_cmd else GripperCommand.OPEN
                action = Action(tabletop.clip_delta(velocity), command)
                since_goal += 1

            action = Action(_keep_off_walls(state.gripper_pos, action.delta), action.gripper_cmd)
            next_state = tabletop.step(state, action)
            if place_xy is None and not next_state.attached and rng.random() < RELOCATE_PROBABILITY:
                next_state = replace(next_state, object_pos=(*rng.uniform(*RELOCATE_RANGE, size=2), 0.0))
            executed = next_state.gripper_pos - state.gripper_pos
            observation = _record_step(trajectory, observation, executed, action.gripper_cmd, next_state)
            state = next_state
            coverage.visit(state.gripper_pos)

        trajectories.append(trajectory)

    dataset = Dataset(trajectories, DatasetMetadata(TaskKind.PICK_AND_DROP, seed, CollectionKind.EXPLORE))
    visited = int(np.count_nonzero(coverage.counts))
    logger.info(
        "Collected %d exploration trajectories, %d steps, %d/%d cells visited",
        len(dataset), dataset.n_steps, visited, coverage.counts.size,
    )
    return dataset


def shift_actions(dataset: Dataset) -> Dataset:
    """Pair each observation with the next step's action and drop the final step."""
    shifted = []
    for k, trajectory in enumerate(dataset):
        if len(trajectory) < 2:
            raise InputError(f"trajectory {k} has {len(trajectory)} steps; shifting needs at least 2")
        steps = [
            Step(current.observation, following.action, following.gripper_cmd, current.next_observation)
            for current, following in zip(trajectory.steps[:-1], trajectory.steps[1:])
        ]
        shifted.append(Trajectory(trajectory.initial_observation, steps))
    return Dataset(shifted, replace(dataset.metadata, shifted=True))


def _vector(values, what: str, line_no: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise FormatError(f"line {line_no}: {what} must be a flat list")
    return arr


def _trajectory_record(trajectory: Trajectory) -> dict:
    return {
        "initial_observation": trajectory.initial_observation.tolist(),
        "steps": [
            {
                "obs": s.observation.tolist(),
                "action": s.action.tolist(),
                "gripper_cmd": s.gripper_cmd.value,
                "next_obs": s.next_observation.tolist(),
            }
            for s in trajectory.steps
        ],
    }


def _trajectory_from_record(record: dict, line_no: int) -> Trajectory:
    try:
        trajectory = Trajectory(_vector(record["initial_observation"], "initial_observation", line_no))
        for raw in record["steps"]:
            trajectory.steps.append(
                Step(
                    observation=_vector(raw["obs"], "obs", line_no),
                    action=_vector(raw["action"], "action", line_no),
                    gripper_cmd=GripperCommand(raw["gripper_cmd"]),
                    next_observation=_vector(raw["next_obs"], "next_obs", line_no),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"line {line_no}: malformed trajectory record: {exc}") from exc

    if not trajectory.chain_is_consistent():
        raise FormatError(f"line {line_no}: next_obs of a step differs from obs of the following step")
    # restore shared storage along the chain
    for a, b in zip(trajectory.steps[:-1], trajectory.steps[1:]):
        b.observation = a.next_observation
    return trajectory


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(dataset.metadata.to_record(), sort_keys=True) + "\n")
        for trajectory in dataset:
            f.write(json.dumps(_trajectory_record(trajectory), allow_nan=False) + "\n")
    logger.info("Dataset with %d trajectories saved to %s", len(dataset), path)
    return path


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise FormatError(f"{path}: empty dataset file")

    try:
        records = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc

    metadata = DatasetMetadata.from_record(records[0])
    trajectories = [_trajectory_from_record(r, n) for n, r in enumerate(records[1:], start=2)]
    return Dataset(trajectories, metadata)
