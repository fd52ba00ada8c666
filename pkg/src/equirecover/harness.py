"""
Experiment orchestration.

Runs the four evaluation conditions (clean, shifted-action and perturbed
pick-and-drop, plus push with the pick-task encoder reused) for the BC and
BC-with-recovery variants on paired environment seeds, and writes the
results table, per-step traces and trained models under one output
directory.
"""

from __future__ import annotations

import json
import logging
import subprocess
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from equirecover import __version__
from equirecover import env as tabletop
from equirecover.config import EvaluationSettings, ExperimentConfig
from equirecover.data import Dataset, collect_demos, collect_explore, shift_actions, write_dataset
from equirecover.density import (
    MdnModel,
    density_auroc,
    episode_condition,
    gmm_density,
    load_mdn,
    mdn_forward,
    save_mdn,
    train_mdn,
)
from equirecover.encoder import (
    EncoderModel,
    distance_preservation,
    load_encoder,
    object_invariance,
    save_encoder,
    train_encoder,
)
from equirecover.env import TaskKind
from equirecover.errors import ConfigurationError, FormatError, InputError, NumericError
from equirecover.expert import scripted_expert
from equirecover.policy import AugmentedPolicy, BcPolicy, PolicyVariant, load_bc, save_bc, train_bc
from equirecover.training import split_trajectories

logger = logging.getLogger(__name__)

COMPARED_VARIANTS = (PolicyVariant.BC, PolicyVariant.BC_WITH_RECOVERY)
RESULT_COLUMNS = [
    "condition",
    "model_variant",
    "grasp_rate",
    "completion_rate",
    "mean_steps",
    "mean_min_gate",
    "n_trials",
    "n_aborted",
    "seed",
]
CSV_COMMENT = "# "
TRACE_FIELDS = (
    "t",
    "gripper_pos",
    "z",
    "density",
    "gate_weight",
    "bc_delta",
    "recovery_delta",
    "applied_delta",
    "gripper_cmd",
)


class Condition(str, Enum):
    PICK_AND_DROP = "pick_and_drop"
    SHIFTED_PICK_AND_DROP = "shifted_pick_and_drop"
    PERTURBED_PICK_AND_DROP = "perturbed_pick_and_drop"
    PUSH = "push"

    @property
    def task_kind(self) -> TaskKind:
        return TaskKind.PUSH if self is Condition.PUSH else TaskKind.PICK_AND_DROP

    @property
    def perturbed(self) -> bool:
        return self is Condition.PERTURBED_PICK_AND_DROP


def _code(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stage_seed(master_seed: int, stage: str) -> int:
    """Independent seed for a named pipeline stage."""
    return int(np.random.SeedSequence([master_seed, _code(stage)]).generate_state(1)[0])


def evaluation_seeds(master_seed: int, condition: Condition | str, n: int) -> list[int]:
    """Environment seeds for a condition; every variant is evaluated on this same list."""
    if n <= 0:
        return []
    state = np.random.SeedSequence([master_seed, _code(Condition(condition).value)]).generate_state(n)
    return [int(s) for s in state]


@dataclass
class TraceRecord:
    t: int
    gripper_pos: list[float]
    z: Optional[list[float]]
    density: Optional[float]
    gate_weight: Optional[float]
    bc_delta: Optional[list[float]]
    recovery_delta: Optional[list[float]]
    applied_delta: list[float]
    gripper_cmd: str

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in TRACE_FIELDS}


@dataclass
class EpisodeResult:
    env_seed: int
    variant: PolicyVariant
    grasped: bool = False
    completed: bool = False
    steps: int = 0
    trace: list[TraceRecord] = field(default_factory=list)
    aborted: Optional[str] = None

    @property
    def min_gate(self) -> Optional[float]:
        gates = [r.gate_weight for r in self.trace if r.gate_weight is not None]
        return min(gates) if gates else None


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values).ravel()]


def run_episode(
    env_seed: int,
    variant: PolicyVariant | str,
    policy: AugmentedPolicy | None,
    task_kind: TaskKind | str,
    settings: EvaluationSettings | None = None,
    perturbed: bool = False,
) -> EpisodeResult:
    """Closed-loop rollout from a seeded reset, with an optional perturbation."""
    settings = settings or EvaluationSettings()
    variant = PolicyVariant(variant)
    if variant is not PolicyVariant.EXPERT and policy is None:
        raise InputError(f"variant {variant.value} needs trained models")

    state = tabletop.reset(np.random.default_rng(env_seed), task_kind)
    perturb_rng = np.random.default_rng([env_seed, 1])
    if policy is not None:
        policy = AugmentedPolicy(
            bc=policy.bc,
            encoder=policy.encoder,
            mdn=policy.mdn,
            gate_config=policy.gate_config,
            variant=variant,
            ascent_target=policy.ascent_target,
        ).begin_episode(tabletop.render(state))

    result = EpisodeResult(env_seed=env_seed, variant=variant)
    ever_attached = False
    for t in range(settings.max_steps):
        if perturbed and t == settings.perturb_step:
            state = tabletop.perturb(state, settings.perturb_magnitude, perturb_rng)
        observation = tabletop.render(state)

        if variant is PolicyVariant.EXPERT:
            action = scripted_expert(state)
            record = TraceRecord(t, _floats(state.gripper_pos), None, None, None, None, None,
                                 _floats(action.delta), action.gripper_cmd.value)
        else:
            try:
                decision = policy.act(observation)
            except (NumericError, InputError) as exc:
                result.aborted = str(exc)
                logger.warning("Episode %d (%s) aborted at step %d: %s", env_seed, variant.value, t, exc)
                break
            action = decision.action
            record = TraceRecord(
                t=t,
                gripper_pos=_floats(state.gripper_pos),
                z=_floats(decision.latent),
                density=float(decision.density),
                gate_weight=float(decision.gate_weight),
                bc_delta=_floats(decision.bc_delta),
                recovery_delta=_floats(decision.recovery_delta),
                applied_delta=_floats(action.delta),
                gripper_cmd=action.gripper_cmd.value,
            )

        state = tabletop.step(state, action)
        result.trace.append(record)
        result.steps = t + 1
        ever_attached = ever_attached or state.attached
        flags = tabletop.success_flags(state, ever_attached)
        result.grasped = flags.grasped
        if flags.completed:
            result.completed = True
            break

    result.grasped = result.grasped or ever_attached
    return result


@dataclass
class TrainedModels:
    encoder: EncoderModel
    mdn_pick: MdnModel
    bc_pick: BcPolicy
    bc_shifted: BcPolicy
    mdn_push: MdnModel
    bc_push: BcPolicy

    def policy_for(self, condition: Condition, config: ExperimentConfig) -> AugmentedPolicy:
        mdn = self.mdn_push if condition is Condition.PUSH else self.mdn_pick
        bc = {
            Condition.PUSH: self.bc_push,
            Condition.SHIFTED_PICK_AND_DROP: self.bc_shifted,
        }.get(condition, self.bc_pick)
        return AugmentedPolicy(
            bc=bc,
            encoder=self.encoder,
            mdn=mdn,
            gate_config=mdn.gate_config,
            ascent_target=config.gate.ascent_target,
        )


@dataclass
class SuiteDatasets:
    explore: Dataset
    pick: Dataset
    shifted: Dataset
    push: Dataset


def collect_datasets(config: ExperimentConfig, progress: bool = False) -> SuiteDatasets:
    pick = collect_demos(
        config.n_demo_traj, TaskKind.PICK_AND_DROP, config.noise_std, stage_seed(config.seed, "demos_pick"),
        progress=progress,
    )
    return SuiteDatasets(
        explore=collect_explore(
            config.n_explore_traj, config.explore_steps, stage_seed(config.seed, "explore"), progress=progress
        ),
        pick=pick,
        shifted=shift_actions(pick),
        push=collect_demos(
            config.n_push_demo_traj, TaskKind.PUSH, config.noise_std, stage_seed(config.seed, "demos_push"),
            progress=progress,
        ),
    )


Model = TypeVar("Model")


def _cached(
    path: Path,
    reuse: bool,
    load: Callable[[Path], Model],
    train: Callable[[], Model],
    save: Callable[[Model, Path], Path],
) -> Model:
    if reuse and path.exists():
        logger.info("Loading cached model %s", path)
        return load(path)
    model = train()
    save(model, path)
    return model


def train_models(
    config: ExperimentConfig,
    datasets: SuiteDatasets,
    models_dir: str | Path,
    reuse_models: bool = False,
    progress: bool = False,
) -> TrainedModels:
    """Train (or load) every model the suite needs; push reuses the pick-task encoder."""
    models_dir = Path(models_dir)
    seed = config.seed

    encoder = _cached(
        models_dir / "encoder.json", reuse_models, load_encoder,
        lambda: train_encoder(datasets.explore, config.encoder, stage_seed(seed, "encoder"), progress),
        save_encoder,
    )

    def mdn_for(dataset: Dataset, name: str) -> MdnModel:
        return _cached(
            models_dir / f"{name}.json", reuse_models, load_mdn,
            lambda: train_mdn(dataset, encoder, config.mdn, stage_seed(seed, name), config.gate, progress),
            save_mdn,
        )

    def bc_for(dataset: Dataset, name: str) -> BcPolicy:
        return _cached(
            models_dir / f"{name}.json", reuse_models, load_bc,
            lambda: train_bc(dataset, config.bc, stage_seed(seed, name), progress),
            save_bc,
        )

    return TrainedModels(
        encoder=encoder,
        mdn_pick=mdn_for(datasets.pick, "mdn_pick"),
        bc_pick=bc_for(datasets.pick, "bc_pick"),
        bc_shifted=bc_for(datasets.shifted, "bc_shifted"),
        mdn_push=mdn_for(datasets.push, "mdn_push"),
        bc_push=bc_for(datasets.push, "bc_push"),
    )


def _condition_seeds(
    condition: Condition,
    policy: AugmentedPolicy,
    config: ExperimentConfig,
) -> list[int]:
    settings = config.evaluation
    if not (condition.perturbed and settings.perturb_on_bc_success):
        return evaluation_seeds(config.seed, condition, settings.n_trials)

    chosen = []
    for candidate in evaluation_seeds(config.seed, condition, 4 * settings.n_trials):
        if run_episode(candidate, PolicyVariant.BC, policy, condition.task_kind, settings).completed:
            chosen.append(candidate)
            if len(chosen) == settings.n_trials:
                break
    if len(chosen) < settings.n_trials:
        logger.warning(
            "Only %d of %d perturbation seeds are solved by unperturbed BC", len(chosen), settings.n_trials
        )
    return chosen


@dataclass
class ResultRow:
    condition: str
    model_variant: str
    grasp_rate: Optional[float]
    completion_rate: float
    mean_steps: float
    mean_min_gate: Optional[float]
    n_trials: int
    seed: int
    # episodes cut short by a numeric or input error
    n_aborted: int = 0

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in RESULT_COLUMNS}


def summarize(condition: Condition, variant: PolicyVariant, episodes: list[EpisodeResult], seed: int) -> ResultRow:
    n = len(episodes)
    gates = [e.min_gate for e in episodes if e.min_gate is not None]
    return ResultRow(
        condition=condition.value,
        model_variant=variant.value,
        # push reports completion only
        grasp_rate=None if condition is Condition.PUSH else (sum(e.grasped for e in episodes) / n if n else 0.0),
        completion_rate=sum(e.completed for e in episodes) / n if n else 0.0,
        mean_steps=float(np.mean([e.steps for e in episodes])) if n else 0.0,
        mean_min_gate=float(np.mean(gates)) if gates else None,
        n_trials=n,
        seed=seed,
        n_aborted=sum(e.aborted is not None for e in episodes),
    )


def run_condition(
    condition: Condition | str,
    models: TrainedModels,
    config: ExperimentConfig,
    variants=COMPARED_VARIANTS,
    progress: bool = False,
) -> tuple[list[ResultRow], dict[PolicyVariant, list[EpisodeResult]]]:
    """Evaluate each variant on the same environment seeds."""
    condition = Condition(condition)
    policy = models.policy_for(condition, config)
    seeds = _condition_seeds(condition, policy, config)
    logger.info("Evaluating %s over %d paired trials", condition.value, len(seeds))

    rows = []
    episodes: dict[PolicyVariant, list[EpisodeResult]] = {}
    for variant in variants:
        variant = PolicyVariant(variant)
        runs = [
            run_episode(s, variant, policy, condition.task_kind, config.evaluation, condition.perturbed)
            for s in tqdm(seeds, desc=f"{condition.value}/{variant.value}", disable=not progress)
        ]
        runs.sort(key=lambda e: e.env_seed)
        episodes[variant] = runs
        rows.append(summarize(condition, variant, runs, config.seed))
        logger.info(
            "%s/%s: completion %.2f, grasp %s",
            condition.value, variant.value, rows[-1].completion_rate,
            "n/a" if rows[-1].grasp_rate is None else f"{rows[-1].grasp_rate:.2f}",
        )
    return rows, episodes


def run_recovery_check(
    models: TrainedModels,
    config: ExperimentConfig,
    n_trials: int = 100,
    max_steps: int | None = None,
) -> dict[str, float]:
    """Pure-recovery rollouts from perturbed reset states.

    Reports the fraction reaching gate >= 0.5 within ``max_steps`` and the
    mean number of steps needed by those that did. Density monotonicity is
    reported twice: ``latent_density_decreases`` counts accepted latent steps
    that lower the mixture density (zero by construction), and
    ``realized_density_decreases`` counts executed steps after which the
    density at the next observation is lower. The latter depends on how
    closely the encoder turns gripper moves into latent moves, so it is
    reported against ``recovery_steps``, the number of executed steps, along
    with the fraction of trials that end at a higher density than they began.
    """
    max_steps = config.evaluation.recovery_steps if max_steps is None else max_steps
    policy = models.policy_for(Condition.PERTURBED_PICK_AND_DROP, config)
    recovered_steps = []
    latent_decreases = 0
    realized_decreases = 0
    executed = 0
    net_gains = 0
    for env_seed in evaluation_seeds(config.seed, "perturbed_pick_and_drop", n_trials):
        rng = np.random.default_rng(env_seed)
        state = tabletop.reset(rng, TaskKind.PICK_AND_DROP)
        episode = AugmentedPolicy(
            bc=policy.bc, encoder=policy.encoder, mdn=policy.mdn, gate_config=policy.gate_config,
            variant=PolicyVariant.RECOVERY_ONLY, ascent_target=policy.ascent_target,
        ).begin_episode(tabletop.render(state))
        state = tabletop.perturb(state, config.evaluation.perturb_magnitude, rng)

        first = previous = None
        for t in range(max_steps + 1):
            observation = tabletop.render(state)
            decision = episode.act(observation)
            if first is None:
                first = decision.density
            if previous is not None and decision.density < previous:
                realized_decreases += 1
            if decision.gate_weight >= 0.5 or t == max_steps:
                if decision.gate_weight >= 0.5:
                    recovered_steps.append(t)
                net_gains += int(decision.density >= first)
                break
            mix = mdn_forward(policy.mdn, episode_condition(episode.initial_observation, observation))
            if gmm_density(mix, decision.latent + decision.action.delta) < decision.density:
                latent_decreases += 1
            previous = decision.density
            state = tabletop.step(state, decision.action)
            executed += 1

    return {
        "recovered_fraction": len(recovered_steps) / n_trials if n_trials else 0.0,
        "mean_steps_to_recover": float(np.mean(recovered_steps)) if recovered_steps else None,
        "latent_density_decreases": latent_decreases,
        "realized_density_decreases": realized_decreases,
        "recovery_steps": executed,
        "density_gain_fraction": net_gains / n_trials if n_trials else 0.0,
        "n_trials": n_trials,
    }


class ResultsTable:
    """Rows of per-condition, per-variant metrics.

    ``metadata`` (artifact version and resolved config) is written to the CSV
    as leading ``# key: value`` lines, the config as compact JSON.
    """

    def __init__(self, rows: list[ResultRow] | None = None, metadata: dict | None = None):
        self.rows = list(rows or [])
        self.metadata = dict(metadata or {})

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_record() for r in self.rows], columns=RESULT_COLUMNS)

    def to_records(self) -> list[dict]:
        return [r.to_record() for r in self.rows]

    def row(self, condition: Condition | str, variant: PolicyVariant | str) -> ResultRow:
        condition = Condition(condition).value
        variant = PolicyVariant(variant).value
        for r in self.rows:
            if r.condition == condition and r.model_variant == variant:
                return r
        raise KeyError(f"no result for {condition}/{variant}")

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as f:
            for key, value in sorted(self.metadata.items()):
                text = value if isinstance(value, str) else json.dumps(_json_safe(value), sort_keys=True)
                f.write(f"{CSV_COMMENT}{key}: {text}\n")
            self.to_frame().to_csv(f, index=False)
        return path

    @classmethod
    def read_csv(cls, path: str | Path) -> "ResultsTable":
        metadata = {}
        n_header = 0
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.startswith(CSV_COMMENT):
                    break
                n_header += 1
                key, _, text = line[len(CSV_COMMENT):].rstrip("\n").partition(": ")
                try:
                    metadata[key] = json.loads(text) if key == "config" else text
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}: unreadable {key} header: {exc}") from exc
        frame = pd.read_csv(path, float_precision="round_trip", skiprows=n_header)
        rows = []
        for record in frame.to_dict(orient="records"):
            for key in ("grasp_rate", "mean_min_gate"):
                if pd.isna(record[key]):
                    record[key] = None
            rows.append(ResultRow(**record))
        return cls(rows, metadata)


def artifact_version() -> str:
    """Package version plus ``git describe`` of the checkout, when there is one."""
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            check=True,
        ).stdout.strip()
    except (subprocess.SubprocessError, FileNotFoundError, OSError):
        return __version__
    return f"{__version__}+{described}" if described else __version__


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_json(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def write_trace(episodes: list[EpisodeResult], path: str | Path) -> Path:
    """One JSON line per step, tagged with the episode's environment seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for episode in sorted(episodes, key=lambda e: e.env_seed):
            for record in episode.trace:
                line = {"env_seed": episode.env_seed, **record.to_record()}
                f.write(json.dumps(_json_safe(line), sort_keys=True) + "\n")
    return path


def read_trace(path: str | Path) -> list[dict]:
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{n}: {exc}") from exc
    return records


def abort_records(condition: Condition, episodes: dict[PolicyVariant, list[EpisodeResult]]) -> list[dict]:
    """One record per aborted episode, in variant then seed order."""
    return [
        {
            "condition": condition.value,
            "model_variant": variant.value,
            "env_seed": episode.env_seed,
            "steps": episode.steps,
            "reason": episode.aborted,
        }
        for variant, runs in episodes.items()
        for episode in runs
        if episode.aborted is not None
    ]


def diagnostics(models: TrainedModels, datasets: SuiteDatasets, config: ExperimentConfig) -> dict:
    _, holdout_idx = split_trajectories(len(datasets.pick), config.mdn.holdout_fraction, stage_seed(config.seed, "mdn_pick"))
    holdout = datasets.pick.subset(holdout_idx)
    return {
        "encoder": {
            **models.encoder.report.holdout,
            "distance_preservation": distance_preservation(models.encoder, holdout),
            "object_invariance": object_invariance(models.encoder, seed=stage_seed(config.seed, "object_invariance")),
        },
        "mdn_pick": {
            **models.mdn_pick.report.holdout,
            "gate": models.mdn_pick.gate_config.to_record(),
            "auroc": density_auroc(models.mdn_pick, models.encoder, holdout, seed=stage_seed(config.seed, "auroc")),
        },
        "mdn_push": {**models.mdn_push.report.holdout, "gate": models.mdn_push.gate_config.to_record()},
        "bc_pick": models.bc_pick.report.holdout,
        "bc_shifted": models.bc_shifted.report.holdout,
        "bc_push": models.bc_push.report.holdout,
        "recovery_check": run_recovery_check(models, config),
        "datasets": {
            "explore_steps": datasets.explore.n_steps,
            "pick_steps": datasets.pick.n_steps,
            "push_steps": datasets.push.n_steps,
        },
    }


def run_suite(
    config: ExperimentConfig,
    out_dir: str | Path,
    reuse_models: bool = False,
    progress: bool = False,
) -> ResultsTable:
    """Collect, train and evaluate every condition; write all artifacts under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("Running suite with master seed %d into %s", config.seed, out_dir)

    datasets = collect_datasets(config, progress)
    if config.save_datasets:
        for name in ("explore", "pick", "shifted", "push"):
            write_dataset(getattr(datasets, name), out_dir / "datasets" / f"{name}.jsonl")

    models = train_models(config, datasets, out_dir / "models", reuse_models, progress)

    table = ResultsTable(metadata={"version": artifact_version(), "config": config.to_record()})
    aborts = []
    for condition in Condition:
        rows, episodes = run_condition(condition, models, config, progress=progress)
        table.rows.extend(rows)
        aborts.extend(abort_records(condition, episodes))
        for variant, runs in episodes.items():
            write_trace(runs, out_dir / "traces" / f"{condition.value}__{variant.value}.jsonl")

    payload = {
        **table.metadata,
        "results": table.to_records(),
        "aborts": aborts,
        "diagnostics": diagnostics(models, datasets, config),
    }
    write_json(payload, out_dir / "results.json")
    table.write_csv(out_dir / "results.csv")
    logger.info("Suite finished: %d result rows", len(table))
    return table


def evaluate(
    config: ExperimentConfig,
    models: TrainedModels,
    conditions,
    out_dir: str | Path,
    progress: bool = False,
) -> ResultsTable:
    """Evaluate selected conditions with already trained models."""
    out_dir = Path(out_dir)
    table = ResultsTable(metadata={"version": artifact_version(), "config": config.to_record()})
    aborts = []
    for condition in conditions:
        condition = Condition(condition)
        rows, episodes = run_condition(condition, models, config, progress=progress)
        table.rows.extend(rows)
        aborts.extend(abort_records(condition, episodes))
        for variant, runs in episodes.items():
            write_trace(runs, out_dir / "traces" / f"{condition.value}__{variant.value}.jsonl")
    write_json(
        {**table.metadata, "results": table.to_records(), "aborts": aborts},
        out_dir / "results.json",
    )
    table.write_csv(out_dir / "results.csv")
    return table


def load_models(models_dir: str | Path) -> TrainedModels:
    models_dir = Path(models_dir)
    try:
        return TrainedModels(
            encoder=load_encoder(models_dir / "encoder.json"),
            mdn_pick=load_mdn(models_dir / "mdn_pick.json"),
            bc_pick=load_bc(models_dir / "bc_pick.json"),
            bc_shifted=load_bc(models_dir / "bc_shifted.json"),
            mdn_push=load_mdn(models_dir / "mdn_push.json"),
            bc_push=load_bc(models_dir / "bc_push.json"),
        )
    except FileNotFoundError as exc:
        raise ConfigurationError(f"missing model file: {exc.filename}") from exc
