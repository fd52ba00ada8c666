"""
Conditional Gaussian-mixture density over encoder latents.

A mixture density network maps a condition vector (the episode's initial
observation followed by the current gripper-closed bit) to the weights,
means and diagonal scales of a Gaussian mixture in latent space. The raw
mixture density drives a sigmoid gate; its closed-form spatial gradient
drives recovery.

The ``gmm_*`` functions are dimension-generic: ``weights`` has shape
``(..., N)``, ``means`` and ``scales`` ``(..., N, D)`` and ``z`` ``(..., D)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax
from sklearn.metrics import roc_auc_score

from equirecover import env as tabletop
from equirecover import nn
from equirecover.config import GateInput, GateSettings, MdnSettings
from equirecover.data import Dataset
from equirecover.encoder import LATENT_DIM, EncoderModel, encode
from equirecover.errors import ConfigurationError, FormatError, InputError, ShapeError
from equirecover.training import (
    TrainingReport,
    cosine_learning_rate,
    ensure_finite,
    epoch_progress,
    iterate_minibatches,
    split_trajectories,
)

logger = logging.getLogger(__name__)

STAGE = "mdn"
LOG_2PI = float(np.log(2.0 * np.pi))
INITIAL_SCALE = 0.1
MIN_TEMPERATURE = 1e-3


@dataclass(frozen=True)
class MixtureParams:
    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    @property
    def component_count(self) -> int:
        return self.weights.shape[-1]

    @property
    def dim(self) -> int:
        return self.means.shape[-1]


@dataclass(frozen=True)
class GateConfig:
    epsilon_offset: float = 2.0
    temperature: float = 0.5
    recovery_scale: float = 0.05
    degenerate: bool = False
    # sigmoid input is log density instead of density
    log_scale: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.temperature) and self.temperature > 0.0):
            raise ConfigurationError(f"gate temperature must be positive, got {self.temperature}")
        if not (np.isfinite(self.recovery_scale) and self.recovery_scale > 0.0):
            raise ConfigurationError(f"recovery scale must be positive, got {self.recovery_scale}")
        if not np.isfinite(self.epsilon_offset):
            raise ConfigurationError(f"gate offset must be finite, got {self.epsilon_offset}")

    def to_record(self) -> dict:
        return {
            "epsilon_offset": float(self.epsilon_offset),
            "temperature": float(self.temperature),
            "recovery_scale": float(self.recovery_scale),
            "degenerate": bool(self.degenerate),
            "log_scale": bool(self.log_scale),
        }

    @classmethod
    def from_record(cls, record: dict) -> "GateConfig":
        return cls(
            epsilon_offset=float(record["epsilon_offset"]),
            temperature=float(record["temperature"]),
            recovery_scale=float(record["recovery_scale"]),
            degenerate=bool(record.get("degenerate", False)),
            log_scale=bool(record.get("log_scale", False)),
        )


@dataclass
class MdnModel:
    trunk: nn.MlpModel
    weight_head: nn.MlpModel
    mean_head: nn.MlpModel
    scale_head: nn.MlpModel
    decoder: Optional[nn.MlpModel] = None
    component_count: int = 8
    latent_dim: int = LATENT_DIM
    sigma_floor: float = 1e-3
    reconstruction_weight: float = 0.0
    gate_config: GateConfig = field(default_factory=GateConfig)
    seed: int = 0
    report: TrainingReport = field(default_factory=TrainingReport)

    @property
    def condition_size(self) -> int:
        return self.trunk.input_size

    def networks(self) -> list[nn.MlpModel]:
        nets = [self.trunk, self.weight_head, self.mean_head, self.scale_head]
        return nets + ([self.decoder] if self.decoder is not None else [])

    def with_networks(self, nets: list[nn.MlpModel]) -> "MdnModel":
        trunk, weight_head, mean_head, scale_head, *rest = nets
        return replace(
            self,
            trunk=trunk,
            weight_head=weight_head,
            mean_head=mean_head,
            scale_head=scale_head,
            decoder=rest[0] if rest else None,
        )


def init_mdn(
    condition_size: int,
    settings: MdnSettings | None = None,
    seed: int = 0,
    latent_dim: int = LATENT_DIM,
) -> MdnModel:
    settings = settings or MdnSettings()
    n = settings.component_count
    rngs = np.random.SeedSequence(seed).generate_state(5)
    trunk = nn.init_model((condition_size, *settings.hidden_sizes), int(rngs[0]))
    width = trunk.output_size
    scale_head = nn.init_model((width, n * latent_dim), int(rngs[3]))
    scale_head.biases[0][:] = np.log(INITIAL_SCALE)
    decoder = None
    if settings.reconstruction:
        decoder = nn.init_model((width, condition_size - 1), int(rngs[4]))
    return MdnModel(
        trunk=trunk,
        weight_head=nn.init_model((width, n), int(rngs[1])),
        mean_head=nn.init_model((width, n * latent_dim), int(rngs[2])),
        scale_head=scale_head,
        decoder=decoder,
        component_count=n,
        latent_dim=latent_dim,
        sigma_floor=settings.sigma_floor,
        reconstruction_weight=settings.reconstruction_weight if settings.reconstruction else 0.0,
        seed=seed,
    )


def _check_latent(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InputError(f"latent must be finite, got {z}")
    return z


def _log_components(weights, means, scales, z) -> np.ndarray:
    """log w_i + log N(z; mu_i, sigma_i), shape (..., N)."""
    u = (z[..., None, :] - means) / scales
    return np.log(weights) + np.sum(-0.5 * u**2 - np.log(scales) - 0.5 * LOG_2PI, axis=-1)


def gmm_log_density(mix: MixtureParams, z):
    z = _check_latent(z)
    if z.shape[-1] != mix.dim:
        raise ShapeError(f"latent dimension {z.shape[-1]} does not match mixture dimension {mix.dim}")
    with np.errstate(divide="ignore"):
        return logsumexp(_log_components(mix.weights, mix.means, mix.scales, z), axis=-1)


def gmm_density(mix: MixtureParams, z):
    return np.exp(gmm_log_density(mix, z))


def gmm_grad(mix: MixtureParams, z) -> np.ndarray:
    """Closed-form spatial gradient of the mixture density."""
    z = _check_latent(z)
    with np.errstate(divide="ignore"):
        components = np.exp(_log_components(mix.weights, mix.means, mix.scales, z))
    pull = -(z[..., None, :] - mix.means) / mix.scales**2
    return np.sum(components[..., None] * pull, axis=-2)


def gmm_log_grad(mix: MixtureParams, z) -> np.ndarray:
    """Spatial gradient of the log density; stays informative far from every component."""
    z = _check_latent(z)
    with np.errstate(divide="ignore"):
        responsibility = softmax(_log_components(mix.weights, mix.means, mix.scales, z), axis=-1)
    pull = -(z[..., None, :] - mix.means) / mix.scales**2
    return np.sum(responsibility[..., None] * pull, axis=-2)


@dataclass
class _MdnTrace:
    features_pre: np.ndarray
    features: np.ndarray
    logits: np.ndarray
    means: np.ndarray
    log_scales: np.ndarray
    scales: np.ndarray


def _as_conditions(model: MdnModel, conditions) -> tuple[np.ndarray, bool]:
    c = np.asarray(conditions, dtype=np.float64)
    single = c.ndim == 1
    c = c[None, :] if single else c
    if c.ndim != 2 or c.shape[1] != model.condition_size:
        raise ShapeError(f"condition shape {np.shape(conditions)} does not match condition size {model.condition_size}")
    return c, single


def _mdn_trace(model: MdnModel, c: np.ndarray) -> _MdnTrace:
    pre = nn.forward(model.trunk, c)
    features = np.maximum(pre, 0.0)
    b = c.shape[0]
    log_scales = nn.forward(model.scale_head, features).reshape(b, model.component_count, model.latent_dim)
    return _MdnTrace(
        features_pre=pre,
        features=features,
        logits=nn.forward(model.weight_head, features),
        means=nn.forward(model.mean_head, features).reshape(b, model.component_count, model.latent_dim),
        log_scales=log_scales,
        scales=np.maximum(np.exp(log_scales), model.sigma_floor),
    )


def mdn_forward(model: MdnModel, condition) -> MixtureParams:
    c, single = _as_conditions(model, condition)
    trace = _mdn_trace(model, c)
    mix = MixtureParams(weights=softmax(trace.logits, axis=-1), means=trace.means, scales=trace.scales)
    if single:
        return MixtureParams(mix.weights[0], mix.means[0], mix.scales[0])
    return mix


@dataclass
class MdnGradients:
    """Per-network gradients in ``MdnModel.networks()`` order."""

    bundles: list[nn.GradBundle]


def mdn_nll(model: MdnModel, conditions, latents) -> tuple[float, MdnGradients]:
    """Mean negative log-likelihood (plus optional reconstruction term) and its exact gradients."""
    c, _ = _as_conditions(model, conditions)
    z = _check_latent(latents).reshape(-1, model.latent_dim)
    b = c.shape[0]
    if b == 0:
        raise InputError("negative log-likelihood needs a non-empty batch")
    if z.shape[0] != b:
        raise ShapeError(f"{b} conditions but {z.shape[0]} latents")

    t = _mdn_trace(model, c)
    log_w = log_softmax(t.logits, axis=-1)
    u = (z[:, None, :] - t.means) / t.scales
    log_comp = log_w + np.sum(-0.5 * u**2 - np.log(t.scales) - 0.5 * LOG_2PI, axis=-1)
    log_rho = logsumexp(log_comp, axis=-1)
    loss = -float(np.mean(log_rho))

    r = np.exp(log_comp - log_rho[:, None])
    w = np.exp(log_w)
    d_logits = -(r - w) / b
    d_means = -(r[..., None] * u / t.scales) / b
    d_log_scales = -(r[..., None] * (u**2 - 1.0)) / b
    d_log_scales = np.where(np.exp(t.log_scales) > model.sigma_floor, d_log_scales, 0.0)

    head_grads = [
        nn.backward(model.weight_head, t.features, d_logits),
        nn.backward(model.mean_head, t.features, d_means.reshape(b, -1)),
        nn.backward(model.scale_head, t.features, d_log_scales.reshape(b, -1)),
    ]
    d_features = sum(g.input for g in head_grads)

    decoder_grad = None
    if model.decoder is not None and model.reconstruction_weight > 0.0:
        reconstruction = nn.forward(model.decoder, t.features)
        error = reconstruction - c[:, :-1]
        loss += model.reconstruction_weight * float(np.sum(error**2)) / b
        decoder_grad = nn.backward(model.decoder, t.features, 2.0 * model.reconstruction_weight * error / b)
        d_features = d_features + decoder_grad.input
    elif model.decoder is not None:
        decoder_grad = nn.backward(model.decoder, t.features, np.zeros((b, model.decoder.output_size)))

    trunk_grad = nn.backward(model.trunk, c, d_features * (t.features_pre > 0.0))
    bundles = [trunk_grad, *head_grads] + ([decoder_grad] if decoder_grad is not None else [])
    return loss, MdnGradients(bundles)


def _step_conditions(transitions) -> np.ndarray:
    closed_bit = transitions.observations[:, -1:]
    return np.hstack([transitions.initial_for_steps(), closed_bit])


def episode_condition(initial_observation, observation) -> np.ndarray:
    """Initial observation followed by the current gripper-closed bit."""
    return np.append(np.asarray(initial_observation, dtype=np.float64), tabletop.gripper_closed_bit(observation))


def _mean_nll(model: MdnModel, conditions: np.ndarray, latents: np.ndarray) -> float:
    return mdn_nll(model, conditions, latents)[0]


def train_mdn(
    dataset: Dataset,
    encoder: EncoderModel,
    settings: MdnSettings | None = None,
    seed: int = 0,
    gate_settings: GateSettings | None = None,
    progress: bool = False,
) -> MdnModel:
    """Fit the mixture to demo latents and calibrate the gate on the held-out trajectories.

    Held-out states stand in for the unseen episodes the gate is applied to;
    training states sit closer to the fitted modes than those do.
    """
    settings = settings or MdnSettings()
    gate_settings = gate_settings or GateSettings()
    if dataset.n_steps == 0:
        raise InputError("density training needs a non-empty demonstration dataset")

    train_idx, holdout_idx = split_trajectories(len(dataset), settings.holdout_fraction, seed)
    train = dataset.subset(train_idx).transitions()
    holdout = dataset.subset(holdout_idx).transitions()
    conditions = _step_conditions(train)
    latents = encode(encoder, train.observations)
    holdout_conditions = _step_conditions(holdout)
    holdout_latents = encode(encoder, holdout.observations)

    model = init_mdn(conditions.shape[1], settings, seed)
    optimizers = [
        nn.init_adam(net, settings.learning_rate, weight_decay=settings.weight_decay) for net in model.networks()
    ]
    rng = np.random.default_rng(seed)
    report = TrainingReport()
    report.holdout["nll_initial"] = _mean_nll(model, holdout_conditions, holdout_latents)
    logger.info(
        "Training mixture density network (%d components) on %d steps", model.component_count, len(train)
    )

    for epoch in epoch_progress(settings.epochs, STAGE, progress):
        learning_rate = cosine_learning_rate(
            settings.learning_rate, epoch, settings.epochs, settings.final_lr_fraction
        )
        for opt in optimizers:
            opt.learning_rate = learning_rate
        losses = []
        weights = []
        for idx in iterate_minibatches(len(train), settings.batch_size, rng):
            loss, grads = mdn_nll(model, conditions[idx], latents[idx])
            ensure_finite(loss, STAGE)
            stepped = [nn.adam_step(net, g, opt) for net, g, opt in zip(model.networks(), grads.bundles, optimizers)]
            model = model.with_networks([s[0] for s in stepped])
            optimizers = [s[1] for s in stepped]
            losses.append(loss)
            weights.append(len(idx))
        report.loss_curve.append(ensure_finite(np.average(losses, weights=weights), STAGE))
        logger.debug("mdn epoch %d nll %.6f", epoch, report.loss_curve[-1])

    report.holdout["nll"] = ensure_finite(_mean_nll(model, holdout_conditions, holdout_latents), STAGE)

    log_scale = gate_settings.gate_input is GateInput.LOG_DENSITY
    mix = mdn_forward(model, holdout_conditions)
    reference = gmm_log_density(mix, holdout_latents) if log_scale else gmm_density(mix, holdout_latents)
    gate_config = calibrate_gate(
        reference, gate_settings.target_quantile, gate_settings.recovery_scale, log_scale=log_scale
    )
    if gate_settings.epsilon_offset is not None or gate_settings.temperature is not None:
        gate_config = replace(
            gate_config,
            epsilon_offset=gate_config.epsilon_offset if gate_settings.epsilon_offset is None else gate_settings.epsilon_offset,
            temperature=gate_config.temperature if gate_settings.temperature is None else gate_settings.temperature,
        )
    model = replace(model, gate_config=gate_config, report=report)
    logger.info(
        "Density trained: held-out NLL %.3f -> %.3f; gate epsilon %.4g temperature %.4g",
        report.holdout["nll_initial"], report.holdout["nll"], gate_config.epsilon_offset, gate_config.temperature,
    )
    return model


def _densities(model: MdnModel, conditions: np.ndarray, latents: np.ndarray) -> np.ndarray:
    return gmm_density(mdn_forward(model, conditions), latents)


def training_densities(model: MdnModel, encoder: EncoderModel, dataset: Dataset) -> np.ndarray:
    """Density of every dataset step's latent under its own condition."""
    tr = dataset.transitions()
    return _densities(model, _step_conditions(tr), encode(encoder, tr.observations))


def gate_signal(density, gate_config: GateConfig):
    """The quantity the gate thresholds: density, or its log on a log-scale gate."""
    density = np.asarray(density, dtype=np.float64)
    if not gate_config.log_scale:
        return density
    with np.errstate(divide="ignore"):
        return np.log(density)


def gate(density, gate_config: GateConfig):
    """Sigmoid of (signal + epsilon) / temperature, signal as in ``gate_signal``."""
    return expit((gate_signal(density, gate_config) + gate_config.epsilon_offset) / gate_config.temperature)


def calibrate_gate(
    densities,
    target_quantile: float = 5.0,
    recovery_scale: float = 0.05,
    log_scale: bool = False,
) -> GateConfig:
    """Place the gate midpoint at the q-th percentile of reference densities.

    With ``log_scale`` the values are log densities and the gate thresholds
    log density.

    The temperature puts the median four temperatures above the midpoint,
    so the median training state gates at expit(4) ~ 0.982.
    """
    densities = np.asarray(densities, dtype=np.float64).ravel()
    if densities.size == 0:
        raise InputError("gate calibration needs at least one density value")
    if not np.all(np.isfinite(densities)):
        raise InputError("gate calibration densities must be finite")

    low = float(np.percentile(densities, target_quantile))
    median = float(np.median(densities))
    temperature = (median - low) / 4.0
    degenerate = temperature < MIN_TEMPERATURE
    if degenerate:
        logger.warning(
            "Training densities have no spread between the %g-th percentile and the median; "
            "temperature floored at %g", target_quantile, MIN_TEMPERATURE,
        )
        temperature = MIN_TEMPERATURE
    return GateConfig(
        epsilon_offset=-low,
        temperature=temperature,
        recovery_scale=recovery_scale,
        degenerate=degenerate,
        log_scale=log_scale,
    )


def sample_uniform_states(rng: np.random.Generator, n: int) -> list[tabletop.EnvState]:
    """Gripper anywhere in the workspace, object anywhere in its reset range."""
    states = []
    for _ in range(n):
        closed = bool(rng.random() < 0.5)
        states.append(
            tabletop.EnvState(
                gripper_pos=rng.uniform(tabletop.WORKSPACE_LOW, tabletop.WORKSPACE_HIGH),
                object_pos=(rng.uniform(*tabletop.OBJECT_X_RANGE), rng.uniform(*tabletop.OBJECT_Y_RANGE), 0.0),
                target_pos=tabletop.TARGET_POSITION,
                attached=False,
                gripper_closed=closed,
                task_kind=tabletop.TaskKind.PICK_AND_DROP,
            )
        )
    return states


def density_auroc(
    model: MdnModel,
    encoder: EncoderModel,
    dataset: Dataset,
    n_random: int = 1000,
    seed: int = 0,
) -> float:
    """AUROC of density scores: demo steps (positive) against uniformly random gripper states."""
    tr = dataset.transitions()
    in_dist = _densities(model, _step_conditions(tr), encode(encoder, tr.observations))

    rng = np.random.default_rng(seed)
    states = sample_uniform_states(rng, n_random)
    observations = np.stack([tabletop.render(s) for s in states])
    initial = tr.initial_observations[rng.integers(0, len(tr.initial_observations), size=n_random)]
    conditions = np.hstack([initial, observations[:, -1:]])
    out_dist = _densities(model, conditions, encode(encoder, observations))

    labels = np.concatenate([np.ones(len(in_dist)), np.zeros(len(out_dist))])
    return float(roc_auc_score(labels, np.concatenate([in_dist, out_dist])))


def mdn_to_dict(model: MdnModel) -> dict:
    return {
        "trunk": nn.model_to_dict(model.trunk),
        "weight_head": nn.model_to_dict(model.weight_head),
        "mean_head": nn.model_to_dict(model.mean_head),
        "scale_head": nn.model_to_dict(model.scale_head),
        "decoder": nn.model_to_dict(model.decoder) if model.decoder is not None else None,
        "component_count": model.component_count,
        "latent_dim": model.latent_dim,
        "sigma_floor": model.sigma_floor,
        "reconstruction_weight": model.reconstruction_weight,
        "gate_config": model.gate_config.to_record(),
        "seed": model.seed,
        "report": model.report.to_record(),
    }


def mdn_from_dict(record: dict) -> MdnModel:
    try:
        decoder = record.get("decoder")
        return MdnModel(
            trunk=nn.model_from_dict(record["trunk"]),
            weight_head=nn.model_from_dict(record["weight_head"]),
            mean_head=nn.model_from_dict(record["mean_head"]),
            scale_head=nn.model_from_dict(record["scale_head"]),
            decoder=nn.model_from_dict(decoder) if decoder is not None else None,
            component_count=int(record["component_count"]),
            latent_dim=int(record.get("latent_dim", LATENT_DIM)),
            sigma_floor=float(record["sigma_floor"]),
            reconstruction_weight=float(record.get("reconstruction_weight", 0.0)),
            gate_config=GateConfig.from_record(record["gate_config"]),
            seed=int(record.get("seed", 0)),
            report=TrainingReport.from_record(record.get("report", {})),
        )
    except (KeyError, TypeError, ValueError, ConfigurationError) as exc:
        raise FormatError(f"malformed density model record: {exc}") from exc


def save_mdn(model: MdnModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(mdn_to_dict(model), sort_keys=True, allow_nan=False), encoding="utf-8")
    return path


def load_mdn(path: str | Path) -> MdnModel:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return mdn_from_dict(record)
