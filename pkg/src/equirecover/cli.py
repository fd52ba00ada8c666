"""
Command-line interface for equirecover.

Every command reads an optional JSON/YAML config, accepts a ``--seed``
override and writes under ``--out`` (``datasets/``, ``models/``, ``traces/``,
``results.json``, ``results.csv``). Exit codes: 0 success, 2 configuration
error, 3 training error, 1 any other failure.
"""

import functools
import logging
from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from equirecover import __version__
from equirecover.config import ExperimentConfig, load_config
from equirecover.data import Dataset, collect_demos, collect_explore, read_dataset, shift_actions, write_dataset
from equirecover.density import save_mdn, train_mdn
from equirecover.encoder import load_encoder, save_encoder, train_encoder
from equirecover.env import TaskKind
from equirecover.errors import ConfigurationError, EquirecoverError, TrainingError
from equirecover.harness import Condition, ResultsTable, evaluate, load_models, run_suite, stage_seed
from equirecover.plots import export_trace_dir
from equirecover.policy import save_bc, train_bc

logger = logging.getLogger(__name__)

console = Console()

app = typer.Typer(
    name="equirecover",
    help="Density-gated recovery for behavioral cloning in a tabletop simulator.",
    no_args_is_help=True,
)

TASK_SUFFIX = {TaskKind.PICK_AND_DROP: "pick", TaskKind.PUSH: "push"}

ConfigOption = typer.Option(None, "--config", "-c", help="JSON or YAML experiment config.")
SeedOption = typer.Option(None, "--seed", help="Master seed override.")
OutOption = typer.Option(Path("out"), "--out", "-o", help="Output directory.")
ProgressOption = typer.Option(False, "--progress", help="Show progress bars.")


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(message)s",
        handlers=[logging.StreamHandler()],
        force=True,
    )


def guarded(func):
    """Map library errors to exit codes, logging each failure once."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigurationError as exc:
            logger.error("Configuration error: %s", exc)
            raise typer.Exit(code=2)
        except TrainingError as exc:
            logger.error("Training failed in stage %s: %s", exc.stage, exc)
            raise typer.Exit(code=3)
        except EquirecoverError as exc:
            logger.error("%s: %s", type(exc).__name__, exc)
            raise typer.Exit(code=1)

    return wrapper


def _existing(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigurationError(f"{what} not found: {path}")
    return path


def _task(config: ExperimentConfig, task: Optional[TaskKind]) -> TaskKind:
    return TaskKind(task or config.task_kind)


def _demo_path(out: Path, task: TaskKind) -> Path:
    return out / "datasets" / f"demos_{TASK_SUFFIX[task]}.jsonl"


def _done(title: str, body: str) -> None:
    console.print(Panel.fit(body, title=title, border_style="green"))


def print_results(table: ResultsTable) -> None:
    view = Table(title="Results")
    for column in ("condition", "variant", "grasp", "complete", "steps", "min gate", "trials", "aborted"):
        view.add_column(column)
    for row in table.rows:
        view.add_row(
            row.condition,
            row.model_variant,
            "-" if row.grasp_rate is None else f"{row.grasp_rate:.2f}",
            f"{row.completion_rate:.2f}",
            f"{row.mean_steps:.1f}",
            "-" if row.mean_min_gate is None else f"{row.mean_min_gate:.3f}",
            str(row.n_trials),
            str(row.n_aborted),
        )
    console.print(view)


@app.callback()
def main_callback(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging."),
):
    configure_logging(verbose)


@app.command("version")
def version():
    """Print the package version."""
    console.print(__version__)


@app.command("collect-explore")
@guarded
def collect_explore_cmd(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = OutOption,
    progress: bool = ProgressOption,
):
    """Collect the task-agnostic exploration dataset."""
    config = load_config(config_path, seed)
    dataset = collect_explore(
        config.n_explore_traj, config.explore_steps, stage_seed(config.seed, "explore"), progress=progress
    )
    path = write_dataset(dataset, out / "datasets" / "explore.jsonl")
    _done("collect-explore", f"{len(dataset)} trajectories, {dataset.n_steps} steps -> {path}")


@app.command("collect-demos")
@guarded
def collect_demos_cmd(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = OutOption,
    task: Optional[TaskKind] = typer.Option(None, "--task", help="Task to demonstrate."),
    progress: bool = ProgressOption,
):
    """Collect scripted-expert demonstrations."""
    config = load_config(config_path, seed)
    task = _task(config, task)
    n_traj = config.n_push_demo_traj if task is TaskKind.PUSH else config.n_demo_traj
    dataset = collect_demos(
        n_traj, task, config.noise_std, stage_seed(config.seed, f"demos_{TASK_SUFFIX[task]}"), progress=progress
    )
    path = write_dataset(dataset, _demo_path(out, task))
    _done("collect-demos", f"{len(dataset)} {task.value} trajectories, {dataset.n_steps} steps -> {path}")


@app.command("train-encoder")
@guarded
def train_encoder_cmd(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = OutOption,
    dataset_path: Optional[Path] = typer.Option(None, "--dataset", help="Exploration dataset."),
    progress: bool = ProgressOption,
):
    """Train the equivariant encoder on exploration data."""
    config = load_config(config_path, seed)
    dataset = read_dataset(_existing(dataset_path or out / "datasets" / "explore.jsonl", "exploration dataset"))
    model = train_encoder(dataset, config.encoder, stage_seed(config.seed, "encoder"), progress)
    path = save_encoder(model, out / "models" / "encoder.json")
    _done("train-encoder", f"held-out residual ratio {model.report.holdout['residual_ratio']:.3f} -> {path}")


@app.command("train-mdn")
@guarded
def train_mdn_cmd(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = OutOption,
    task: Optional[TaskKind] = typer.Option(None, "--task", help="Task whose demonstrations to fit."),
    dataset_path: Optional[Path] = typer.Option(None, "--dataset", help="Demonstration dataset."),
    encoder_path: Optional[Path] = typer.Option(None, "--encoder", help="Trained encoder."),
    progress: bool = ProgressOption,
):
    """Fit the conditional mixture density over demonstration latents."""
    config = load_config(config_path, seed)
    task = _task(config, task)
    dataset = read_dataset(_existing(dataset_path or _demo_path(out, task), "demonstration dataset"))
    encoder = load_encoder(_existing(encoder_path or out / "models" / "encoder.json", "encoder"))
    name = f"mdn_{TASK_SUFFIX[task]}"
    model = train_mdn(dataset, encoder, config.mdn, stage_seed(config.seed, name), config.gate, progress)
    path = save_mdn(model, out / "models" / f"{name}.json")
    _done("train-mdn", f"held-out NLL {model.report.holdout['nll']:.3f} -> {path}")


@app.command("train-bc")
@guarded
def train_bc_cmd(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = OutOption,
    task: Optional[TaskKind] = typer.Option(None, "--task", help="Task whose demonstrations to clone."),
    dataset_path: Optional[Path] = typer.Option(None, "--dataset", help="Demonstration dataset."),
    shift: bool = typer.Option(False, "--shift", help="Train on one-step shifted actions."),
    progress: bool = ProgressOption,
):
    """Train the behavioral cloning policy."""
    config = load_config(config_path, seed)
    task = _task(config, task)
    dataset: Dataset = read_dataset(_existing(dataset_path or _demo_path(out, task), "demonstration dataset"))
    name = f"bc_{TASK_SUFFIX[task]}"
    if shift:
        dataset = shift_actions(dataset)
        name = "bc_shifted"
    policy = train_bc(dataset, config.bc, stage_seed(config.seed, name), progress)
    path = save_bc(policy, out / "models" / f"{name}.json")
    _done("train-bc", f"held-out action MSE {policy.report.holdout['action_mse']:.3g} -> {path}")


@app.command("eval")
@guarded
def eval_cmd(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = OutOption,
    models_dir: Optional[Path] = typer.Option(None, "--models", help="Directory of trained models."),
    conditions: Optional[List[Condition]] = typer.Option(None, "--condition", help="Condition(s) to evaluate."),
    progress: bool = ProgressOption,
):
    """Evaluate BC and BC-with-recovery on paired seeds."""
    config = load_config(config_path, seed)
    models = load_models(_existing(models_dir or out / "models", "models directory"))
    table = evaluate(config, models, conditions or list(Condition), out, progress)
    print_results(table)


@app.command("suite")
@guarded
def suite_cmd(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = OutOption,
    reuse_models: bool = typer.Option(False, "--reuse-models", help="Load models from OUT/models when present."),
    progress: bool = ProgressOption,
):
    """Collect, train and evaluate all four experiments."""
    config = load_config(config_path, seed)
    table = run_suite(config, out, reuse_models=reuse_models, progress=progress)
    print_results(table)
    _done("suite", f"results -> {out / 'results.json'}")


@app.command("export-plots")
@guarded
def export_plots_cmd(
    out: Path = OutOption,
    traces_dir: Optional[Path] = typer.Option(None, "--traces", help="Directory of trace files."),
    figures: bool = typer.Option(False, "--figures", help="Also render PNG figures."),
):
    """Export latent, density and gate plot data from traces."""
    traces_dir = _existing(traces_dir or out / "traces", "traces directory")
    written = export_trace_dir(traces_dir, out / "plots", figures=figures)
    _done("export-plots", f"{len(written)} files -> {out / 'plots'}")


def main():
    app()


if __name__ == "__main__":
    main()
