import json

import numpy as np
import pytest

from equirecover import env
from equirecover.data import (
    COVERAGE_GRID,
    CollectionKind,
    Dataset,
    DatasetMetadata,
    Step,
    Trajectory,
    collect_demos,
    collect_explore,
    occupancy,
    read_dataset,
    shift_actions,
    write_dataset,
)
from equirecover.env import GripperCommand, TaskKind
from equirecover.errors import CollectionError, FormatError, InputError


@pytest.fixture(scope="module")
def demos():
    return collect_demos(5, TaskKind.PICK_AND_DROP, noise_std=0.005, seed=2)


@pytest.fixture(scope="module")
def explore():
    return collect_explore()


def _toy_dataset(n_steps=3):
    observations = [np.full(4, float(k)) for k in range(n_steps + 1)]
    steps = [
        Step(observations[k], np.array([0.01 * (k + 1), 0.0, 0.0]),
             GripperCommand.CLOSE if k % 2 else GripperCommand.OPEN, observations[k + 1])
        for k in range(n_steps)
    ]
    return Dataset([Trajectory(observations[0], steps)], DatasetMetadata(TaskKind.PICK_AND_DROP, 0, CollectionKind.DEMO))


def test_demos_have_consistent_chains(demos):
    assert len(demos) == 5
    for trajectory in demos:
        assert trajectory.chain_is_consistent()
        assert np.array_equal(trajectory.initial_observation, trajectory.steps[0].observation)
        assert len(trajectory) <= env.MAX_EPISODE_STEPS


def test_demo_actions_are_executed_displacements(demos):
    for trajectory in demos:
        for s in trajectory.steps:
            assert np.all(np.abs(s.action) <= env.STEP_CLIP + 1e-12)


def test_demo_collection_is_deterministic(demos):
    again = collect_demos(5, TaskKind.PICK_AND_DROP, noise_std=0.005, seed=2)
    assert again.n_steps == demos.n_steps
    t1, t2 = demos.transitions(), again.transitions()
    assert np.array_equal(t1.observations, t2.observations)
    assert np.array_equal(t1.actions, t2.actions)


def test_push_demos_collect():
    dataset = collect_demos(3, TaskKind.PUSH, seed=1)
    assert len(dataset) == 3
    assert dataset.metadata.task_kind is TaskKind.PUSH
    assert np.all(dataset.transitions().gripper_labels == 1.0)


def test_failing_expert_raises_collection_error():
    with pytest.raises(CollectionError):
        collect_demos(3, TaskKind.PICK_AND_DROP, seed=0, max_steps=5)


def test_transitions_are_aligned(demos):
    transitions = demos.transitions()
    assert len(transitions) == demos.n_steps
    assert transitions.observations.shape == (demos.n_steps, env.observation_length())
    assert transitions.initial_for_steps().shape == transitions.observations.shape
    assert transitions.trajectory_index[-1] == len(demos) - 1


def test_empty_dataset_has_no_transitions():
    empty = Dataset([], DatasetMetadata(TaskKind.PICK_AND_DROP, 0, CollectionKind.DEMO))
    with pytest.raises(InputError):
        empty.transitions()


def test_shift_actions_pairs_next_action():
    shifted = shift_actions(_toy_dataset(3))
    steps = shifted.trajectories[0].steps
    assert len(steps) == 2
    np.testing.assert_array_equal(steps[0].action, [0.02, 0.0, 0.0])
    np.testing.assert_array_equal(steps[1].action, [0.03, 0.0, 0.0])
    assert steps[0].gripper_cmd is GripperCommand.CLOSE
    np.testing.assert_array_equal(steps[1].observation, np.full(4, 1.0))
    assert shifted.metadata.shifted


def test_shift_actions_rejects_short_trajectory():
    with pytest.raises(InputError):
        shift_actions(_toy_dataset(1))


def test_write_and_read_are_exact(tmp_path, demos):
    path = write_dataset(demos, tmp_path / "demos.jsonl")
    loaded = read_dataset(path)
    assert loaded.metadata == demos.metadata
    assert len(loaded) == len(demos)
    for a, b in zip(demos, loaded):
        assert np.array_equal(a.initial_observation, b.initial_observation)
        for s, r in zip(a.steps, b.steps):
            assert np.array_equal(s.observation, r.observation)
            assert np.array_equal(s.action, r.action)
            assert s.gripper_cmd is r.gripper_cmd
        assert all(x.next_observation is y.observation for x, y in zip(b.steps[:-1], b.steps[1:]))


def test_write_is_byte_identical(tmp_path, demos):
    first = write_dataset(demos, tmp_path / "a.jsonl").read_bytes()
    second = write_dataset(read_dataset(tmp_path / "a.jsonl"), tmp_path / "b.jsonl").read_bytes()
    assert first == second


def test_read_rejects_broken_chain(tmp_path):
    path = write_dataset(_toy_dataset(3), tmp_path / "toy.jsonl")
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    record["steps"][1]["obs"] = [9.0, 9.0, 9.0, 9.0]
    lines[1] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError):
        read_dataset(path)


def test_read_rejects_malformed_metadata(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"task_kind": "juggle", "seed": 0, "collection_kind": "demo"}\n')
    with pytest.raises(FormatError):
        read_dataset(path)


def test_explore_default_size(explore):
    assert len(explore) == 6
    assert explore.n_steps == 6 * 290
    assert explore.metadata.collection_kind is CollectionKind.EXPLORE


def test_explore_actions_are_clipped(explore):
    actions = explore.transitions().actions
    assert np.all(np.abs(actions) <= env.STEP_CLIP + 1e-12)


def test_explore_visits_every_cell(explore):
    counts = occupancy(explore)
    assert counts.shape == COVERAGE_GRID
    assert np.all(counts > 0)


def test_explore_includes_grasps(explore):
    labels = explore.transitions().gripper_labels
    assert 0.0 < labels.mean() < 1.0


def test_explore_moves_object_independently_of_gripper(explore):
    transitions = explore.transitions()
    before, _ = env.split_observation(transitions.observations)
    after, _ = env.split_observation(transitions.next_observations)
    n_pixels = env.IMAGE_SIZE * env.IMAGE_SIZE
    object_before = before[..., 1].reshape(-1, n_pixels).argmax(axis=1)
    object_after = after[..., 1].reshape(-1, n_pixels).argmax(axis=1)
    row_jump = np.abs(object_before // env.IMAGE_SIZE - object_after // env.IMAGE_SIZE)
    col_jump = np.abs(object_before % env.IMAGE_SIZE - object_after % env.IMAGE_SIZE)
    # a carried object moves at most one pixel per step
    hops = np.count_nonzero(np.maximum(row_jump, col_jump) >= 3)
    assert hops >= 50
