import numpy as np
import pytest

from equirecover.config import (
    BcSettings,
    EncoderSettings,
    EvaluationSettings,
    ExperimentConfig,
    MdnSettings,
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_config():
    """A configuration small enough to run the whole pipeline in seconds."""
    return ExperimentConfig(
        n_demo_traj=4,
        n_push_demo_traj=3,
        n_explore_traj=2,
        explore_steps=60,
        encoder=EncoderSettings(epochs=2, hidden_sizes=(16,)),
        mdn=MdnSettings(epochs=2, hidden_sizes=(8,), component_count=2),
        bc=BcSettings(epochs=2, hidden_sizes=(16,)),
        evaluation=EvaluationSettings(
            n_trials=2, max_steps=12, perturb_step=2, recovery_steps=5, perturb_on_bc_success=False
        ),
        seed=3,
    )


@pytest.fixture(scope="session")
def tiny_datasets(tiny_config):
    from equirecover.harness import collect_datasets

    return collect_datasets(tiny_config)


@pytest.fixture(scope="session")
def tiny_models(tiny_config, tiny_datasets, tmp_path_factory):
    from equirecover.harness import train_models

    return train_models(tiny_config, tiny_datasets, tmp_path_factory.mktemp("models"))
