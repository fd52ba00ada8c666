import numpy as np
import pytest

from equirecover import env
from equirecover.env import Action, EnvState, GripperCommand, TaskKind
from equirecover.errors import InputError


def _state(gripper, obj=(0.3, 0.5, 0.0), attached=False, closed=False, task=TaskKind.PICK_AND_DROP):
    return EnvState(gripper, obj, env.TARGET_POSITION, attached, closed, task)


def _same(a: EnvState, b: EnvState) -> bool:
    return (
        np.array_equal(a.gripper_pos, b.gripper_pos)
        and np.array_equal(a.object_pos, b.object_pos)
        and a.attached == b.attached
        and a.gripper_closed == b.gripper_closed
    )


def test_reset_is_deterministic():
    a = env.reset(np.random.default_rng(4), TaskKind.PICK_AND_DROP)
    b = env.reset(np.random.default_rng(4), TaskKind.PICK_AND_DROP)
    assert _same(a, b)


def test_reset_layout():
    state = env.reset(np.random.default_rng(0), TaskKind.PICK_AND_DROP)
    assert np.array_equal(state.gripper_pos, [0.25, 0.5, 0.3])
    assert np.array_equal(state.target_pos, [0.75, 0.5, 0.0])
    assert not state.attached and not state.gripper_closed
    assert env.reset(np.random.default_rng(0), TaskKind.PUSH).gripper_closed


def test_reset_object_distribution():
    rng = np.random.default_rng(0)
    xs = np.array([env.reset(rng, "pick_and_drop").object_pos[0] for _ in range(1000)])
    assert np.all(xs < 0.5)
    assert abs(xs.mean() - 0.25) < 0.02


def test_identity_action_leaves_state_unchanged():
    state = env.reset(np.random.default_rng(2), TaskKind.PICK_AND_DROP)
    assert _same(env.step(state, Action(np.zeros(3))), state)


def test_close_at_object_attaches():
    state = _state((0.3, 0.5, 0.0))
    after = env.step(state, Action(np.zeros(3), GripperCommand.CLOSE))
    assert after.attached and after.gripper_closed


def test_close_while_already_closed_does_not_attach():
    state = _state((0.3, 0.5, 0.0), closed=True)
    after = env.step(state, Action(np.zeros(3), GripperCommand.CLOSE))
    assert not after.attached


def test_close_out_of_reach_does_not_attach():
    state = _state((0.3, 0.5, 0.05))
    assert not env.step(state, Action(np.zeros(3), GripperCommand.CLOSE)).attached


def test_attached_object_follows_lift():
    state = _state((0.32, 0.5, 0.05))
    state = env.step(state, Action((-0.02, 0.0, -0.05), GripperCommand.OPEN))
    state = env.step(state, Action(np.zeros(3), GripperCommand.CLOSE))
    state = env.step(state, Action((0.0, 0.0, 0.05), GripperCommand.CLOSE))
    assert state.attached
    assert state.object_pos[2] == state.gripper_pos[2] == pytest.approx(0.05)


def test_open_drops_object_to_table():
    state = _state((0.4, 0.6, 0.2), obj=(0.4, 0.6, 0.2), attached=True, closed=True)
    after = env.step(state, Action((0.01, 0.0, 0.0), GripperCommand.OPEN))
    assert not after.attached and not after.gripper_closed
    np.testing.assert_allclose(after.object_pos, [0.41, 0.6, 0.0])


def test_push_contact_moves_object_in_plane():
    state = _state((0.27, 0.5, 0.0), closed=True, task=TaskKind.PUSH)
    after = env.step(state, Action((0.02, 0.01, 0.01)))
    np.testing.assert_allclose(after.object_pos, [0.32, 0.51, 0.0])
    assert after.gripper_closed


def test_push_without_contact_leaves_object():
    state = _state((0.1, 0.5, 0.0), closed=True, task=TaskKind.PUSH)
    after = env.step(state, Action((0.02, 0.0, 0.0)))
    np.testing.assert_array_equal(after.object_pos, state.object_pos)


def test_step_clips_delta_and_workspace():
    state = _state((0.99, 0.5, 0.3))
    after = env.step(state, Action((0.2, -0.2, 0.0)))
    np.testing.assert_allclose(after.gripper_pos, [1.0, 0.45, 0.3])


def test_non_finite_action_is_rejected():
    state = _state((0.5, 0.5, 0.2))
    with pytest.raises(InputError):
        env.step(state, Action((np.nan, 0.0, 0.0)))


def test_workspace_closure_under_random_actions(rng):
    for task in TaskKind:
        state = env.reset(rng, task)
        for _ in range(300):
            command = GripperCommand.CLOSE if rng.random() < 0.5 else GripperCommand.OPEN
            state = env.step(state, Action(rng.normal(scale=0.2, size=3), command))
            for pos in (state.gripper_pos, state.object_pos):
                assert np.all(pos >= env.WORKSPACE_LOW) and np.all(pos <= env.WORKSPACE_HIGH)
            if state.attached:
                assert state.gripper_closed
                assert np.array_equal(state.object_pos, state.gripper_pos)


def test_render_length_and_range():
    obs = env.render(env.reset(np.random.default_rng(0), TaskKind.PICK_AND_DROP))
    assert obs.shape == (env.observation_length(),) == (3 * 16 * 16 + 2,)
    image, extras = env.split_observation(obs)
    assert np.all(image >= 0.0) and np.all(image <= 1.0)
    assert extras[0] == pytest.approx(0.3) and extras[1] == 0.0


def test_render_channels_are_separate():
    a, _ = env.split_observation(env.render(_state((0.2, 0.2, 0.1))))
    b, _ = env.split_observation(env.render(_state((0.6, 0.7, 0.1))))
    assert not np.array_equal(a[..., 0], b[..., 0])
    assert np.array_equal(a[..., 1], b[..., 1])
    assert np.array_equal(a[..., 2], b[..., 2])


def test_gripper_at_pixel_center_lights_that_pixel():
    i, j = 5, 9
    center = ((j + 0.5) / 16, (i + 0.5) / 16, 0.2)
    image, _ = env.split_observation(env.render(_state(center)))
    assert image[i, j, 0] == 1.0


def test_render_is_deterministic():
    state = _state((0.4, 0.3, 0.2))
    assert np.array_equal(env.render(state), env.render(state))


def test_observations_distinguish_pixel_pitch_moves(rng):
    for _ in range(50):
        g = rng.uniform([0.1, 0.1, 0.0], [0.9, 0.9, 0.5])
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        moved = g + np.append(direction / 16, 0.0)
        assert not np.array_equal(env.render(_state(g)), env.render(_state(moved)))


def test_success_flags_thresholds():
    at_target = _state((0.75, 0.5, 0.2), obj=(0.75, 0.5, 0.0))
    assert env.success_flags(at_target).completed
    assert env.success_flags(_state((0.5, 0.5, 0.2), obj=(0.75 - 0.049, 0.5, 0.0))).completed
    assert not env.success_flags(_state((0.5, 0.5, 0.2), obj=(0.75 - 0.051, 0.5, 0.0))).completed
    closed = _state((0.75, 0.5, 0.2), obj=(0.75, 0.5, 0.0), closed=True)
    assert not env.success_flags(closed).completed


def test_success_flags_at_reset_are_false():
    for task in TaskKind:
        flags = env.success_flags(env.reset(np.random.default_rng(0), task))
        assert not flags.grasped and not flags.completed


def test_success_flags_report_earlier_grasp():
    state = _state((0.5, 0.5, 0.2))
    assert env.success_flags(state, ever_attached=True).grasped
    assert not env.success_flags(state).grasped


def test_perturb_moves_by_magnitude():
    state = env.reset(np.random.default_rng(0), TaskKind.PICK_AND_DROP)
    after = env.perturb(state, 0.15, np.random.default_rng(3))
    assert np.linalg.norm(after.gripper_pos - state.gripper_pos) == pytest.approx(0.15)


def test_perturb_zero_is_identity():
    state = env.perturb(env.reset(np.random.default_rng(0), "pick_and_drop"), 0.15, np.random.default_rng(1))
    assert _same(env.perturb(state, 0.0, np.random.default_rng(2)), state)


def test_perturb_is_deterministic():
    state = env.reset(np.random.default_rng(0), TaskKind.PICK_AND_DROP)
    a = env.perturb(state, 0.15, np.random.default_rng(8))
    b = env.perturb(state, 0.15, np.random.default_rng(8))
    assert _same(a, b)


def test_perturb_carries_attached_object():
    state = _state((0.4, 0.4, 0.2), obj=(0.4, 0.4, 0.2), attached=True, closed=True)
    after = env.perturb(state, 0.1, np.random.default_rng(0))
    assert np.array_equal(after.object_pos, after.gripper_pos)


def test_perturb_rejects_negative_magnitude():
    with pytest.raises(InputError):
        env.perturb(_state((0.4, 0.4, 0.2)), -0.1, np.random.default_rng(0))
