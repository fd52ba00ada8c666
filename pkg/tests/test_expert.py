import numpy as np
import pytest

from equirecover import env
from equirecover.env import EnvState, GripperCommand, TaskKind
from equirecover.errors import InputError
from equirecover.expert import (
    FINE_RADIUS,
    FINE_STEP,
    ExpertPhase,
    expert_phase,
    plan,
    plan_to_action,
    scripted_expert,
)


def _rollout(task, seed, noise_std=0.0, max_steps=200):
    rng = np.random.default_rng(seed)
    state = env.reset(rng, task)
    ever_attached = False
    for t in range(max_steps):
        state = env.step(state, scripted_expert(state, noise_std, rng))
        ever_attached = ever_attached or state.attached
        if env.success_flags(state, ever_attached).completed:
            return t + 1, ever_attached
    return None, ever_attached


def test_approach_moves_by_clipped_waypoint_difference():
    state = EnvState((0.25, 0.5, 0.3), (0.4, 0.2, 0.0), env.TARGET_POSITION, False, False, TaskKind.PICK_AND_DROP)
    phase, waypoint, command = plan(state)
    assert phase is ExpertPhase.APPROACH
    np.testing.assert_allclose(waypoint, [0.4, 0.2, 0.15])
    action = scripted_expert(state)
    np.testing.assert_allclose(action.delta, env.clip_delta(waypoint - state.gripper_pos))
    assert command is GripperCommand.OPEN


def test_motion_never_exceeds_step_clip(rng):
    state = env.reset(rng, TaskKind.PICK_AND_DROP)
    for _ in range(100):
        action = scripted_expert(state, 0.05, rng)
        assert np.all(np.abs(action.delta) <= env.STEP_CLIP)
        state = env.step(state, action)


def test_gripper_phase_has_zero_translation():
    state = EnvState((0.3, 0.5, 0.0), (0.3, 0.5, 0.0), env.TARGET_POSITION, False, False, TaskKind.PICK_AND_DROP)
    assert expert_phase(state) is ExpertPhase.GRASP
    action = scripted_expert(state, 0.01, np.random.default_rng(0))
    assert np.array_equal(action.delta, np.zeros(3))
    assert action.gripper_cmd is GripperCommand.CLOSE


def test_closed_on_nothing_reopens():
    state = EnvState((0.5, 0.5, 0.2), (0.3, 0.5, 0.0), env.TARGET_POSITION, False, True, TaskKind.PICK_AND_DROP)
    assert expert_phase(state) is ExpertPhase.RELEASE


def test_push_keeps_gripper_closed(rng):
    state = env.reset(rng, TaskKind.PUSH)
    for _ in range(50):
        action = scripted_expert(state)
        assert action.gripper_cmd is GripperCommand.CLOSE
        state = env.step(state, action)


@pytest.mark.parametrize("task", list(TaskKind))
def test_noise_free_expert_completes_from_every_reset(task):
    for seed in range(100):
        steps, ever_attached = _rollout(task, seed)
        assert steps is not None, f"seed {seed} did not complete"
        if task is TaskKind.PICK_AND_DROP:
            assert ever_attached


def test_noisy_expert_completes():
    completed = sum(_rollout(TaskKind.PICK_AND_DROP, seed, noise_std=0.005)[0] is not None for seed in range(20))
    assert completed >= 19


def test_noisy_expert_is_deterministic():
    assert _rollout(TaskKind.PICK_AND_DROP, 5, 0.005) == _rollout(TaskKind.PICK_AND_DROP, 5, 0.005)


def test_noise_requires_generator():
    state = env.reset(np.random.default_rng(0), TaskKind.PICK_AND_DROP)
    with pytest.raises(InputError):
        plan_to_action(state, plan(state), noise_std=0.01)


def test_done_at_target_issues_no_motion():
    state = EnvState((0.5, 0.5, 0.2), (0.75, 0.5, 0.0), env.TARGET_POSITION, False, False, TaskKind.PICK_AND_DROP)
    assert expert_phase(state) is ExpertPhase.DONE
    assert np.array_equal(scripted_expert(state).delta, np.zeros(3))


def test_push_step_keeps_contact():
    for seed in range(20):
        state = env.reset(np.random.default_rng(seed), TaskKind.PUSH)
        for _ in range(200):
            phase = expert_phase(state)
            if phase is ExpertPhase.DONE:
                break
            after = env.step(state, scripted_expert(state))
            if phase is ExpertPhase.PUSH:
                assert not np.array_equal(after.object_pos, state.object_pos), f"seed {seed} lost contact"
                assert np.linalg.norm(after.gripper_pos - after.object_pos) < env.CONTACT_RADIUS
            state = after


def test_push_reaches_target_without_repeated_approaches():
    for seed in range(20):
        state = env.reset(np.random.default_rng(seed), TaskKind.PUSH)
        phases = []
        while expert_phase(state) is not ExpertPhase.DONE and len(phases) < 200:
            phases.append(expert_phase(state))
            state = env.step(state, scripted_expert(state))
        assert ExpertPhase.RISE not in phases
        assert len(phases) <= 60


def test_noisy_push_expert_completes():
    completed = sum(_rollout(TaskKind.PUSH, seed, noise_std=0.005)[0] is not None for seed in range(20))
    assert completed >= 19


def _expert_states(seed):
    state = env.reset(np.random.default_rng(seed), TaskKind.PICK_AND_DROP)
    states = [state]
    while expert_phase(state) is not ExpertPhase.DONE and len(states) < 200:
        state = env.step(state, scripted_expert(state))
        states.append(state)
    return states


def test_final_descent_and_transport_steps_are_short():
    for seed in range(20):
        for state in _expert_states(seed):
            phase, _, _ = plan(state)
            delta = scripted_expert(state).delta
            if phase is ExpertPhase.DESCEND:
                remaining = np.linalg.norm(state.gripper_pos - [*state.object_pos[:2], 0.0])
            elif phase is ExpertPhase.TRANSPORT:
                remaining = env.planar_distance(state.gripper_pos, env.TARGET_POSITION)
            else:
                continue
            if remaining <= FINE_RADIUS + 1e-9:
                assert np.linalg.norm(delta) <= FINE_STEP + 1e-9


def test_gripper_change_one_step_early_still_succeeds():
    close_early = env.Action(np.zeros(3), GripperCommand.CLOSE)
    open_early = env.Action(np.zeros(3), GripperCommand.OPEN)
    for seed in range(20):
        states = _expert_states(seed)
        phases = [expert_phase(s) for s in states]
        grasp = phases.index(ExpertPhase.GRASP)
        assert env.step(states[grasp - 1], close_early).attached, f"seed {seed}"
        release = phases.index(ExpertPhase.RELEASE)
        dropped = env.step(states[release - 1], open_early)
        assert env.success_flags(dropped, True).completed, f"seed {seed}"
