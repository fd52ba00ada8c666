"""
Experiment configuration.

All settings are pydantic models that reject unknown keys. Files may be JSON
or YAML; both go through ``yaml.safe_load``.
"""

from __future__ import annotations

import logging
from enum import Enum
from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError

from equirecover.env import TaskKind
from equirecover.errors import ConfigurationError

logger = logging.getLogger(__name__)


class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AscentTarget(str, Enum):
    DENSITY = "density"
    LOG_DENSITY = "log_density"


class GateInput(str, Enum):
    DENSITY = "density"
    LOG_DENSITY = "log_density"


class EncoderSettings(_Settings):
    learning_rate: PositiveFloat = 1e-3
    anchor_weight: float = Field(0.1, ge=0.0)
    batch_size: PositiveInt = 64
    epochs: PositiveInt = 300
    weight_decay: float = Field(0.05, ge=0.0)
    final_lr_fraction: float = Field(0.05, gt=0.0, le=1.0)
    hidden_sizes: tuple[PositiveInt, ...] = (128, 64)
    holdout_fraction: float = Field(0.25, ge=0.0, lt=1.0)


class MdnSettings(_Settings):
    learning_rate: PositiveFloat = 1e-4
    component_count: PositiveInt = 8
    sigma_floor: PositiveFloat = 1e-3
    batch_size: PositiveInt = 64
    epochs: PositiveInt = 300
    weight_decay: float = Field(0.0, ge=0.0)
    final_lr_fraction: float = Field(0.1, gt=0.0, le=1.0)
    hidden_sizes: tuple[PositiveInt, ...] = (64, 64)
    holdout_fraction: float = Field(0.25, ge=0.0, lt=1.0)
    reconstruction: bool = False
    reconstruction_weight: float = Field(1e-2, ge=0.0)


class BcSettings(_Settings):
    learning_rate: PositiveFloat = 1e-4
    batch_size: PositiveInt = 64
    epochs: PositiveInt = 300
    weight_decay: float = Field(0.0, ge=0.0)
    final_lr_fraction: float = Field(0.1, gt=0.0, le=1.0)
    hidden_sizes: tuple[PositiveInt, ...] = (128, 64)
    holdout_fraction: float = Field(0.25, ge=0.0, lt=1.0)


class GateSettings(_Settings):
    target_quantile: float = Field(5.0, gt=0.0, lt=50.0)
    recovery_scale: PositiveFloat = 0.05
    epsilon_offset: Optional[float] = None
    temperature: Optional[PositiveFloat] = None
    ascent_target: AscentTarget = AscentTarget.LOG_DENSITY
    gate_input: GateInput = GateInput.LOG_DENSITY


class EvaluationSettings(_Settings):
    n_trials: PositiveInt = 50
    perturb_magnitude: float = Field(0.15, ge=0.0)
    perturb_step: NonNegativeInt = 5
    max_steps: NonNegativeInt = 200
    perturb_on_bc_success: bool = True
    recovery_steps: PositiveInt = 30


class ExperimentConfig(_Settings):
    task_kind: TaskKind = TaskKind.PICK_AND_DROP
    n_demo_traj: PositiveInt = 120
    n_push_demo_traj: PositiveInt = 60
    n_explore_traj: PositiveInt = 6
    explore_steps: PositiveInt = 290
    noise_std: float = Field(0.005, ge=0.0)
    encoder: EncoderSettings = EncoderSettings()
    mdn: MdnSettings = MdnSettings()
    bc: BcSettings = BcSettings()
    gate: GateSettings = GateSettings()
    evaluation: EvaluationSettings = EvaluationSettings()
    seed: NonNegativeInt = 0
    save_datasets: bool = False

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else self.model_copy(update={"seed": int(seed)})

    def to_record(self) -> dict:
        return self.model_dump(mode="json")


def load_config(path: str | Path | None = None, seed: int | None = None) -> ExperimentConfig:
    """Read, validate and seed-override a config file; defaults when ``path`` is None."""
    if path is None:
        raw = {}
    else:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"config {path} must hold a mapping, got {type(raw).__name__}")

    if seed is not None and seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}")
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config: {exc}") from exc

    config = config.with_seed(seed)
    logger.debug("Resolved config: %s", config.to_record())
    return config
