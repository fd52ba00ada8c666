"""
Behavioral cloning, density-ascent recovery and their gated blend.

The blended translation is ``g * bc + (1 - g) * recovery`` where ``g`` is the
sigmoid gate of the mixture density at the current latent. The gripper is
never blended: BC commands it while ``g >= 0.5``, otherwise it holds.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from equirecover import env as tabletop
from equirecover import nn
from equirecover.config import AscentTarget, BcSettings
from equirecover.data import Dataset
from equirecover.density import (
    GateConfig,
    MdnModel,
    MixtureParams,
    episode_condition,
    gate,
    gmm_density,
    gmm_grad,
    gmm_log_grad,
    mdn_forward,
)
from equirecover.encoder import EncoderModel, encode
from equirecover.env import Action, GripperCommand
from equirecover.errors import FormatError, InputError, NumericError
from equirecover.training import (
    TrainingReport,
    cosine_learning_rate,
    ensure_finite,
    epoch_progress,
    iterate_minibatches,
    split_trajectories,
)

logger = logging.getLogger(__name__)

STAGE = "bc"
BC_OUTPUT_SIZE = 4
CLOSE_THRESHOLD = 0.5
MAX_HALVINGS = 5


class PolicyVariant(str, Enum):
    BC = "bc"
    BC_WITH_RECOVERY = "bc_with_recovery"
    RECOVERY_ONLY = "recovery_only"
    EXPERT = "expert"


@dataclass
class BcPolicy:
    net: nn.MlpModel
    seed: int = 0
    report: TrainingReport = field(default_factory=TrainingReport)


def _bc_targets(transitions) -> np.ndarray:
    return np.hstack([transitions.actions, transitions.gripper_labels[:, None]])


def bc_loss(net: nn.MlpModel, observations, targets) -> tuple[float, nn.GradBundle]:
    """Mean over the batch of the summed squared error on translation and gripper label."""
    observations = np.asarray(observations, dtype=np.float64)
    b = observations.shape[0]
    if b == 0:
        raise InputError("behavioral cloning loss needs a non-empty batch")
    error = nn.forward(net, observations) - targets
    return float(np.sum(error**2)) / b, nn.backward(net, observations, 2.0 * error / b)


def train_bc(
    dataset: Dataset,
    settings: BcSettings | None = None,
    seed: int = 0,
    progress: bool = False,
) -> BcPolicy:
    settings = settings or BcSettings()
    if dataset.n_steps == 0:
        raise InputError("behavioral cloning needs a non-empty demonstration dataset")

    train_idx, holdout_idx = split_trajectories(len(dataset), settings.holdout_fraction, seed)
    train = dataset.subset(train_idx).transitions()
    targets = _bc_targets(train)

    layer_sizes = (train.observations.shape[1], *settings.hidden_sizes, BC_OUTPUT_SIZE)
    net = nn.init_model(layer_sizes, seed)
    adam = nn.init_adam(net, settings.learning_rate, weight_decay=settings.weight_decay)
    rng = np.random.default_rng(seed)
    logger.info("Training BC policy %s on %d steps", list(layer_sizes), len(train))

    report = TrainingReport()
    for epoch in epoch_progress(settings.epochs, STAGE, progress):
        adam.learning_rate = cosine_learning_rate(
            settings.learning_rate, epoch, settings.epochs, settings.final_lr_fraction
        )
        losses = []
        weights = []
        for idx in iterate_minibatches(len(train), settings.batch_size, rng):
            loss, grads = bc_loss(net, train.observations[idx], targets[idx])
            ensure_finite(loss, STAGE)
            net, adam = nn.adam_step(net, grads, adam)
            losses.append(loss)
            weights.append(len(idx))
        report.loss_curve.append(ensure_finite(np.average(losses, weights=weights), STAGE))
        logger.debug("bc epoch %d loss %.6f", epoch, report.loss_curve[-1])

    holdout = dataset.subset(holdout_idx).transitions()
    predicted = nn.forward(net, holdout.observations)[:, :3]
    baseline = np.mean(train.actions, axis=0)
    report.holdout = {
        "action_mse": float(np.mean(np.sum((predicted - holdout.actions) ** 2, axis=1))),
        "baseline_mse": float(np.mean(np.sum((baseline - holdout.actions) ** 2, axis=1))),
    }
    logger.info(
        "BC trained: held-out action MSE %.3g (mean-action baseline %.3g)",
        report.holdout["action_mse"], report.holdout["baseline_mse"],
    )
    return BcPolicy(net=net, seed=seed, report=report)


def bc_act(policy: BcPolicy, observation) -> Action:
    output = nn.forward(policy.net, observation)
    command = GripperCommand.CLOSE if output[3] > CLOSE_THRESHOLD else GripperCommand.OPEN
    return Action(tabletop.clip_delta(output[:3]), command)


def ascent_step(
    mix: MixtureParams,
    z,
    recovery_scale: float,
    target: AscentTarget | str = AscentTarget.DENSITY,
) -> np.ndarray:
    """Clipped gradient step in latent space that never lowers the density.

    The step is halved up to five times until the density after it is no lower
    than at ``z``; if none qualifies the step is zero.
    """
    z = np.asarray(z, dtype=np.float64)
    target = AscentTarget(target)
    grad = gmm_log_grad(mix, z) if target is AscentTarget.LOG_DENSITY else gmm_grad(mix, z)
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"density gradient is not finite at latent {z}")

    step = tabletop.clip_delta(recovery_scale * grad)
    current = gmm_density(mix, z)
    for _ in range(MAX_HALVINGS + 1):
        if gmm_density(mix, z + step) >= current:
            return step
        step = step / 2.0
    return np.zeros_like(z)


def recovery_act(
    encoder: EncoderModel,
    mdn: MdnModel,
    condition,
    observation,
    gate_config: GateConfig,
    target: AscentTarget | str = AscentTarget.LOG_DENSITY,
) -> Action:
    mix = mdn_forward(mdn, condition)
    delta = ascent_step(mix, encode(encoder, observation), gate_config.recovery_scale, target)
    return Action(delta, tabletop.hold_command(observation))


def blend_actions(bc_delta, recovery_delta, gate_weight: float) -> np.ndarray:
    """Convex combination of the two translations, before the step clip."""
    return gate_weight * np.asarray(bc_delta) + (1.0 - gate_weight) * np.asarray(recovery_delta)


@dataclass(frozen=True, eq=False)
class BlendDecision:
    action: Action
    gate_weight: float
    density: float
    latent: np.ndarray
    bc_delta: np.ndarray
    recovery_delta: np.ndarray


@dataclass(frozen=True, eq=False)
class AugmentedPolicy:
    bc: BcPolicy
    encoder: EncoderModel
    mdn: MdnModel
    gate_config: GateConfig
    initial_observation: Optional[np.ndarray] = None
    variant: PolicyVariant = PolicyVariant.BC_WITH_RECOVERY
    ascent_target: AscentTarget = AscentTarget.LOG_DENSITY

    def begin_episode(self, initial_observation) -> "AugmentedPolicy":
        frozen = np.array(initial_observation, dtype=np.float64)
        frozen.setflags(write=False)
        return replace(self, initial_observation=frozen)

    def act(self, observation) -> BlendDecision:
        return combined_act(self, observation)


def combined_act(policy: AugmentedPolicy, observation) -> BlendDecision:
    """One step of the chosen variant with gate diagnostics."""
    if policy.initial_observation is None:
        raise InputError("the episode condition is not set; call begin_episode first")
    variant = PolicyVariant(policy.variant)
    if variant is PolicyVariant.EXPERT:
        raise InputError("the expert variant acts on simulator state, not observations")

    observation = np.asarray(observation, dtype=np.float64)
    latent = encode(policy.encoder, observation)
    mix = mdn_forward(policy.mdn, episode_condition(policy.initial_observation, observation))
    density = float(gmm_density(mix, latent))
    weight = float(gate(density, policy.gate_config))
    hold = tabletop.hold_command(observation)

    bc_action = bc_act(policy.bc, observation)
    if variant is PolicyVariant.BC:
        recovery_delta = np.zeros(3)
        action = bc_action
    else:
        recovery_delta = ascent_step(mix, latent, policy.gate_config.recovery_scale, policy.ascent_target)
        if variant is PolicyVariant.RECOVERY_ONLY:
            action = Action(recovery_delta, hold)
        else:
            blended = tabletop.clip_delta(blend_actions(bc_action.delta, recovery_delta, weight))
            command = bc_action.gripper_cmd if weight >= 0.5 else hold
            action = Action(blended, command)

    if not np.all(np.isfinite(action.delta)):
        raise NumericError(f"policy produced a non-finite action {action.delta}")
    return BlendDecision(
        action=action,
        gate_weight=weight,
        density=density,
        latent=latent,
        bc_delta=np.asarray(bc_action.delta),
        recovery_delta=np.asarray(recovery_delta),
    )


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def save_bc(policy: BcPolicy, path: str | Path) -> Path:
    path = nn.save_model(policy.net, path)
    record = {"seed": policy.seed, "report": policy.report.to_record()}
    _sidecar(path).write_text(json.dumps(record, sort_keys=True, allow_nan=False), encoding="utf-8")
    return path


def load_bc(path: str | Path) -> BcPolicy:
    path = Path(path)
    net = nn.load_model(path)
    if net.output_size != BC_OUTPUT_SIZE:
        raise FormatError(f"{path}: policy output size {net.output_size}, expected {BC_OUTPUT_SIZE}")
    try:
        record = json.loads(_sidecar(path).read_text(encoding="utf-8"))
        return BcPolicy(net=net, seed=int(record["seed"]), report=TrainingReport.from_record(record["report"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable policy metadata: {exc}") from exc
