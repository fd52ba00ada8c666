import json
from dataclasses import replace

import numpy as np
import pytest

from equirecover import __version__
from equirecover.config import EvaluationSettings, ExperimentConfig
from equirecover.env import TaskKind
from equirecover.errors import ConfigurationError, InputError
from equirecover.harness import (
    Condition,
    ResultRow,
    ResultsTable,
    abort_records,
    artifact_version,
    evaluation_seeds,
    load_models,
    read_trace,
    run_condition,
    run_episode,
    run_recovery_check,
    run_suite,
    stage_seed,
    summarize,
    train_models,
    write_trace,
)
from equirecover.policy import BcPolicy, PolicyVariant


def test_stage_seeds_are_distinct_and_stable():
    assert stage_seed(0, "encoder") == stage_seed(0, "encoder")
    assert stage_seed(0, "encoder") != stage_seed(0, "mdn_pick")
    assert stage_seed(0, "encoder") != stage_seed(1, "encoder")


def test_evaluation_seeds_depend_on_condition():
    pick = evaluation_seeds(0, Condition.PICK_AND_DROP, 5)
    assert pick == evaluation_seeds(0, "pick_and_drop", 5)
    assert pick != evaluation_seeds(0, Condition.PUSH, 5)
    assert evaluation_seeds(0, Condition.PUSH, 3) == evaluation_seeds(0, Condition.PUSH, 5)[:3]
    assert evaluation_seeds(0, Condition.PUSH, 0) == []


def test_condition_properties():
    assert Condition.PUSH.task_kind is TaskKind.PUSH
    assert Condition.SHIFTED_PICK_AND_DROP.task_kind is TaskKind.PICK_AND_DROP
    assert Condition.PERTURBED_PICK_AND_DROP.perturbed
    assert not Condition.PICK_AND_DROP.perturbed


@pytest.mark.parametrize("task", list(TaskKind))
def test_expert_episode_completes(task):
    result = run_episode(11, PolicyVariant.EXPERT, None, task)
    assert result.completed
    assert result.steps == len(result.trace) <= 200
    assert result.trace[0].z is None and result.min_gate is None


def test_expert_recovers_from_perturbation():
    result = run_episode(11, PolicyVariant.EXPERT, None, TaskKind.PICK_AND_DROP, perturbed=True)
    assert result.completed and result.grasped


def test_zero_max_steps():
    result = run_episode(3, PolicyVariant.EXPERT, None, TaskKind.PICK_AND_DROP, EvaluationSettings(max_steps=0))
    assert result.trace == [] and result.steps == 0
    assert not result.grasped and not result.completed


def test_learned_variant_needs_models():
    with pytest.raises(InputError):
        run_episode(0, PolicyVariant.BC, None, TaskKind.PICK_AND_DROP)


def test_episodes_are_deterministic(tiny_models, tiny_config):
    policy = tiny_models.policy_for(Condition.PICK_AND_DROP, tiny_config)
    a = run_episode(5, PolicyVariant.BC_WITH_RECOVERY, policy, TaskKind.PICK_AND_DROP, tiny_config.evaluation)
    b = run_episode(5, PolicyVariant.BC_WITH_RECOVERY, policy, TaskKind.PICK_AND_DROP, tiny_config.evaluation)
    assert [r.to_record() for r in a.trace] == [r.to_record() for r in b.trace]
    assert 0.0 <= a.min_gate <= 1.0


def test_variants_share_seeds(tiny_models, tiny_config):
    rows, episodes = run_condition(Condition.PERTURBED_PICK_AND_DROP, tiny_models, tiny_config)
    assert [r.model_variant for r in rows] == ["bc", "bc_with_recovery"]
    seeds = [[e.env_seed for e in runs] for runs in episodes.values()]
    assert seeds[0] == seeds[1] == sorted(evaluation_seeds(tiny_config.seed, "perturbed_pick_and_drop", 2))
    for row in rows:
        assert row.n_trials == 2
        assert 0.0 <= row.completion_rate <= 1.0


def test_push_rows_have_no_grasp_rate(tiny_models, tiny_config):
    rows, _ = run_condition(Condition.PUSH, tiny_models, tiny_config)
    assert all(r.grasp_rate is None for r in rows)


def test_recovery_check_never_lowers_latent_density(tiny_models, tiny_config):
    check = run_recovery_check(tiny_models, tiny_config, n_trials=5)
    assert check["latent_density_decreases"] == 0
    assert 0.0 <= check["recovered_fraction"] <= 1.0
    assert 0 <= check["realized_density_decreases"] <= check["recovery_steps"]
    assert check["recovery_steps"] <= 5 * tiny_config.evaluation.recovery_steps
    assert 0.0 <= check["density_gain_fraction"] <= 1.0
    assert check["n_trials"] == 5


def test_models_reload_from_disk(tiny_config, tiny_datasets, tiny_models, tmp_path):
    train_models(tiny_config, tiny_datasets, tmp_path)
    reloaded = load_models(tmp_path)
    for a, b in zip(tiny_models.bc_pick.net.parameters(), reloaded.bc_pick.net.parameters()):
        assert np.array_equal(a, b)
    assert reloaded.mdn_pick.gate_config == tiny_models.mdn_pick.gate_config


def test_missing_models_are_a_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError):
        load_models(tmp_path)


def test_results_table_csv_round_trip(tmp_path):
    table = ResultsTable(
        [
            ResultRow("pick_and_drop", "bc", 0.9, 0.8, 61.25, 0.75, 50, 0, n_aborted=2),
            ResultRow("push", "bc_with_recovery", None, 1.0 / 3.0, 40.0, None, 50, 0),
        ],
        metadata={"version": artifact_version(), "config": ExperimentConfig().to_record()},
    )
    path = table.write_csv(tmp_path / "results.csv")
    assert path.read_text().startswith("# config: {")
    loaded = ResultsTable.read_csv(path)
    assert loaded.to_records() == table.to_records()
    assert loaded.metadata["version"] == artifact_version()
    assert ExperimentConfig.model_validate(loaded.metadata["config"]) == ExperimentConfig()
    assert loaded.row("pick_and_drop", "bc").n_aborted == 2
    assert loaded.row("push", PolicyVariant.BC_WITH_RECOVERY).completion_rate == 1.0 / 3.0
    with pytest.raises(KeyError):
        loaded.row("push", "bc")


def test_trace_round_trip(tmp_path):
    result = run_episode(2, PolicyVariant.EXPERT, None, TaskKind.PUSH, EvaluationSettings(max_steps=4))
    records = read_trace(write_trace([result], tmp_path / "trace.jsonl"))
    assert [r["t"] for r in records] == [0, 1, 2, 3]
    assert all(r["env_seed"] == 2 and r["density"] is None for r in records)


def test_artifact_version_starts_with_package_version():
    assert artifact_version().startswith(__version__)


def test_suite_writes_artifacts_deterministically(tiny_config, tmp_path):
    first = run_suite(tiny_config, tmp_path / "a")
    second = run_suite(tiny_config, tmp_path / "b")
    assert len(first) == 8
    assert (tmp_path / "a" / "results.json").read_bytes() == (tmp_path / "b" / "results.json").read_bytes()
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    traces = sorted(p.name for p in (tmp_path / "a" / "traces").glob("*.jsonl"))
    assert len(traces) == 8 and "push__bc_with_recovery.jsonl" in traces
    payload = json.loads((tmp_path / "a" / "results.json").read_text())
    assert set(payload) == {"version", "config", "results", "aborts", "diagnostics"}
    assert payload["aborts"] == []
    csv_text = (tmp_path / "a" / "results.csv").read_text()
    assert f"# version: {payload['version']}\n" in csv_text
    assert ResultsTable.read_csv(tmp_path / "a" / "results.csv").metadata["config"] == payload["config"]
    assert payload["config"]["seed"] == tiny_config.seed
    assert first.to_records() == second.to_records()


def test_suite_reuses_saved_models(tiny_config, tmp_path):
    run_suite(tiny_config, tmp_path)
    before = (tmp_path / "results.json").read_bytes()
    run_suite(tiny_config, tmp_path, reuse_models=True)
    assert (tmp_path / "results.json").read_bytes() == before


def test_aborted_episodes_are_counted_and_recorded(tiny_models, tiny_config):
    policy = tiny_models.policy_for(Condition.PICK_AND_DROP, tiny_config)
    broken = policy.bc.net.copy()
    broken.biases[-1][:] = np.nan
    policy = replace(policy, bc=BcPolicy(net=broken))

    episode = run_episode(4, PolicyVariant.BC, policy, TaskKind.PICK_AND_DROP, tiny_config.evaluation)
    assert episode.aborted is not None and episode.steps == 0

    row = summarize(Condition.PICK_AND_DROP, PolicyVariant.BC, [episode], tiny_config.seed)
    assert row.n_aborted == 1 and row.completion_rate == 0.0
    records = abort_records(Condition.PICK_AND_DROP, {PolicyVariant.BC: [episode]})
    assert records == [
        {"condition": "pick_and_drop", "model_variant": "bc", "env_seed": 4, "steps": 0, "reason": episode.aborted}
    ]
