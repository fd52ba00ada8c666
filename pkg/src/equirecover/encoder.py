"""
Translation-equivariant observation encoder.

The encoder maps an observation to a 3-vector so that a gripper translation
``a`` becomes a latent translation: E(s') ~= E(s) + a. Trajectory-initial
observations are pulled to the latent origin.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from equirecover import env as tabletop
from equirecover import nn
from equirecover.config import EncoderSettings
from equirecover.data import Dataset
from equirecover.errors import FormatError, InputError
from equirecover.training import (
    TrainingReport,
    cosine_learning_rate,
    ensure_finite,
    epoch_progress,
    iterate_minibatches,
    split_trajectories,
)

logger = logging.getLogger(__name__)

LATENT_DIM = 3
STAGE = "encoder"


@dataclass
class EncoderModel:
    net: nn.MlpModel
    anchor_weight: float = 0.1
    seed: int = 0
    report: TrainingReport = field(default_factory=TrainingReport)


@dataclass
class TransitionBatch:
    observations: np.ndarray
    actions: np.ndarray
    next_observations: np.ndarray
    initial_observations: np.ndarray

    def __len__(self) -> int:
        return self.observations.shape[0]


def encode(model: EncoderModel, observation) -> np.ndarray:
    return nn.forward(model.net, observation)


def _equivariance_loss(net: nn.MlpModel, batch: TransitionBatch, anchor_weight: float) -> tuple[float, nn.GradBundle]:
    n = len(batch)
    if n == 0:
        raise InputError("equivariance loss needs at least one transition")
    initial = np.asarray(batch.initial_observations, dtype=np.float64).reshape(-1, net.input_size)
    m = initial.shape[0]

    # one pass over [s', s, s0]
    stacked = np.concatenate([batch.next_observations, batch.observations, initial], axis=0)
    latents = nn.forward(net, stacked)
    z_next, z, z0 = latents[:n], latents[n:2 * n], latents[2 * n:]

    residual = z_next - z - np.asarray(batch.actions, dtype=np.float64)
    loss = np.sum(residual**2) / n
    upstream = [2.0 * residual / n, -2.0 * residual / n]
    if m > 0:
        loss += anchor_weight * np.sum(z0**2) / m
        upstream.append(2.0 * anchor_weight * z0 / m)
    else:
        upstream.append(np.zeros((0, LATENT_DIM)))

    grads = nn.backward(net, stacked, np.concatenate(upstream, axis=0))
    return float(loss), grads


def equivariance_loss(model: EncoderModel, batch: TransitionBatch) -> tuple[float, nn.GradBundle]:
    """Mean squared latent residual plus the anchor pull on initial observations."""
    return _equivariance_loss(model.net, batch, model.anchor_weight)


def batch_from_dataset(dataset: Dataset, indices=None) -> TransitionBatch:
    tr = dataset.transitions()
    if indices is None:
        indices = np.arange(len(tr))
    return TransitionBatch(
        observations=tr.observations[indices],
        actions=tr.actions[indices],
        next_observations=tr.next_observations[indices],
        initial_observations=tr.initial_observations[np.unique(tr.trajectory_index[indices])],
    )


def train_encoder(
    dataset: Dataset,
    settings: EncoderSettings | None = None,
    seed: int = 0,
    progress: bool = False,
) -> EncoderModel:
    settings = settings or EncoderSettings()
    if dataset.n_steps == 0:
        raise InputError("encoder training needs a non-empty exploration dataset")

    train_idx, holdout_idx = split_trajectories(len(dataset), settings.holdout_fraction, seed)
    train = dataset.subset(train_idx)
    tr = train.transitions()

    layer_sizes = (tr.observations.shape[1], *settings.hidden_sizes, LATENT_DIM)
    net = nn.init_model(layer_sizes, seed)
    adam = nn.init_adam(net, settings.learning_rate, weight_decay=settings.weight_decay)
    rng = np.random.default_rng(seed)
    logger.info(
        "Training encoder %s on %d transitions (%d trajectories held out)",
        list(layer_sizes), len(tr), len(holdout_idx),
    )

    report = TrainingReport()
    for epoch in epoch_progress(settings.epochs, STAGE, progress):
        adam.learning_rate = cosine_learning_rate(
            settings.learning_rate, epoch, settings.epochs, settings.final_lr_fraction
        )
        losses = []
        weights = []
        for idx in iterate_minibatches(len(tr), settings.batch_size, rng):
            batch = TransitionBatch(
                observations=tr.observations[idx],
                actions=tr.actions[idx],
                next_observations=tr.next_observations[idx],
                initial_observations=tr.initial_observations[np.unique(tr.trajectory_index[idx])],
            )
            loss, grads = _equivariance_loss(net, batch, settings.anchor_weight)
            ensure_finite(loss, STAGE)
            net, adam = nn.adam_step(net, grads, adam)
            losses.append(loss)
            weights.append(len(idx))
        report.loss_curve.append(ensure_finite(np.average(losses, weights=weights), STAGE))
        logger.debug("encoder epoch %d loss %.6f", epoch, report.loss_curve[-1])

    model = EncoderModel(net=net, anchor_weight=settings.anchor_weight, seed=seed, report=report)
    report.holdout = evaluate_equivariance(model, dataset.subset(holdout_idx))
    logger.info(
        "Encoder trained: final loss %.5f, held-out residual ratio %.3f, anchor %.4f",
        report.loss_curve[-1], report.holdout["residual_ratio"], report.holdout["anchor_mean"],
    )
    return model


def _trajectory_latents(model: EncoderModel, trajectory) -> np.ndarray:
    observations = [s.observation for s in trajectory.steps] + [trajectory.steps[-1].next_observation]
    return encode(model, np.stack(observations))


def evaluate_equivariance(model: EncoderModel, dataset: Dataset) -> dict[str, float]:
    tr = dataset.transitions()
    residual = encode(model, tr.next_observations) - encode(model, tr.observations) - tr.actions
    residual_norm = np.linalg.norm(residual, axis=1)
    action_norm = np.linalg.norm(tr.actions, axis=1)
    median_action = float(np.median(action_norm))
    median_residual = float(np.median(residual_norm))
    return {
        "median_residual": median_residual,
        "median_action_norm": median_action,
        "residual_ratio": median_residual / median_action if median_action > 0 else float("inf"),
        "anchor_mean": float(np.mean(np.linalg.norm(encode(model, tr.initial_observations), axis=1))),
    }


def distance_preservation(model: EncoderModel, dataset: Dataset, max_horizon: int = 5) -> dict[int, float]:
    """Median of latent displacement over summed action, per horizon k."""
    ratios: dict[int, list[float]] = {k: [] for k in range(1, max_horizon + 1)}
    for trajectory in dataset:
        if len(trajectory) == 0:
            continue
        latents = _trajectory_latents(model, trajectory)
        cumulative = np.vstack([np.zeros(3), np.cumsum([s.action for s in trajectory.steps], axis=0)])
        for k in ratios:
            if len(trajectory) < k:
                continue
            moved = np.linalg.norm(cumulative[k:] - cumulative[:-k], axis=1)
            latent_moved = np.linalg.norm(latents[k:] - latents[:-k], axis=1)
            keep = moved > 1e-6
            ratios[k].extend((latent_moved[keep] / moved[keep]).tolist())
    return {k: float(np.median(v)) if v else float("nan") for k, v in ratios.items()}


def _random_state(rng: np.random.Generator) -> tabletop.EnvState:
    return tabletop.EnvState(
        gripper_pos=rng.uniform([0.1, 0.1, 0.05], [0.9, 0.9, 0.45]),
        object_pos=(*rng.uniform([0.1, 0.1], [0.9, 0.9]), 0.0),
        target_pos=tabletop.TARGET_POSITION,
        attached=False,
        gripper_closed=False,
        task_kind=tabletop.TaskKind.PICK_AND_DROP,
    )


def object_invariance(
    model: EncoderModel,
    n_pairs: int = 100,
    magnitude: float = 0.05,
    seed: int = 0,
) -> float:
    """Latent shift from moving the object over the shift from moving the gripper equally far."""
    rng = np.random.default_rng(seed)
    object_shift = []
    gripper_shift = []
    for _ in range(n_pairs):
        base = _random_state(rng)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        planar = magnitude * np.array([np.cos(angle), np.sin(angle), 0.0])
        moved_object = tabletop.EnvState(
            base.gripper_pos, base.object_pos + planar, base.target_pos, False, False, base.task_kind
        )
        moved_gripper = tabletop.EnvState(
            base.gripper_pos + planar, base.object_pos, base.target_pos, False, False, base.task_kind
        )
        z = encode(model, np.stack([tabletop.render(s) for s in (base, moved_object, moved_gripper)]))
        object_shift.append(np.linalg.norm(z[1] - z[0]))
        gripper_shift.append(np.linalg.norm(z[2] - z[0]))
    return float(np.mean(object_shift) / np.mean(gripper_shift))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def save_encoder(model: EncoderModel, path: str | Path) -> Path:
    path = nn.save_model(model.net, path)
    record = {"anchor_weight": model.anchor_weight, "seed": model.seed, "report": model.report.to_record()}
    _sidecar(path).write_text(json.dumps(record, sort_keys=True, allow_nan=False), encoding="utf-8")
    return path


def load_encoder(path: str | Path) -> EncoderModel:
    path = Path(path)
    net = nn.load_model(path)
    if net.output_size != LATENT_DIM:
        raise FormatError(f"{path}: encoder output size {net.output_size}, expected {LATENT_DIM}")
    try:
        record = json.loads(_sidecar(path).read_text(encoding="utf-8"))
        return EncoderModel(
            net=net,
            anchor_weight=float(record["anchor_weight"]),
            seed=int(record["seed"]),
            report=TrainingReport.from_record(record["report"]),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable encoder metadata: {exc}") from exc
