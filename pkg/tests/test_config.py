import pytest

from equirecover.config import AscentTarget, ExperimentConfig, GateInput, load_config
from equirecover.env import TaskKind
from equirecover.errors import ConfigurationError


def test_defaults():
    config = load_config()
    assert config.seed == 0
    assert config.n_demo_traj == 120 and config.n_explore_traj == 6 and config.explore_steps == 290
    assert config.encoder.learning_rate == 1e-3 and config.encoder.anchor_weight == 0.1
    assert config.mdn.component_count == 8 and config.mdn.sigma_floor == 1e-3
    assert config.bc.learning_rate == 1e-4
    assert config.gate.target_quantile == 5.0 and config.gate.recovery_scale == 0.05
    assert config.evaluation.n_trials == 50 and config.evaluation.perturb_magnitude == 0.15
    assert config.gate.ascent_target is AscentTarget.LOG_DENSITY
    assert config.gate.gate_input is GateInput.LOG_DENSITY
    assert config.evaluation.perturb_on_bc_success
    assert config.encoder.epochs == 300 and config.encoder.weight_decay == 0.05


def test_yaml_file_with_seed_override(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("task_kind: push\nmdn:\n  component_count: 4\nseed: 3\n")
    config = load_config(path, seed=9)
    assert config.task_kind is TaskKind.PUSH
    assert config.mdn.component_count == 4
    assert config.mdn.epochs == 300
    assert config.seed == 9


def test_json_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"evaluation": {"n_trials": 7}, "gate": {"ascent_target": "density", "gate_input": "density"}}')
    config = load_config(path)
    assert config.evaluation.n_trials == 7
    assert config.gate.ascent_target is AscentTarget.DENSITY
    assert config.gate.gate_input is GateInput.DENSITY


@pytest.mark.parametrize(
    "text",
    [
        "unknown_key: 1\n",
        "mdn:\n  component_count: 0\n",
        "gate:\n  temperature: -1.0\n",
        "encoder:\n  holdout_fraction: 1.0\n",
        "- a list\n",
        "key: [unclosed\n",
    ],
)
def test_invalid_files_are_configuration_errors(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_missing_file_is_a_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "nope.yaml")


def test_negative_seed_is_rejected():
    with pytest.raises(ConfigurationError):
        load_config(seed=-1)


def test_record_round_trip():
    config = ExperimentConfig(seed=4, noise_std=0.01)
    assert ExperimentConfig.model_validate(config.to_record()) == config
