"""
Plot data export from rollout traces.

For every trace file three CSVs are written: the latent trajectory projected
onto the table plane, the density along the trajectory and the gate-weight
timeline. ``render_figures`` turns those CSVs into PNG figures.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from equirecover.errors import FormatError  # noqa: E402
from equirecover.harness import read_trace  # noqa: E402

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("env_seed", "t", "z", "density", "gate_weight")
PLOT_KINDS = ("latent", "density", "gate")


def _frames(name: str, records: list[dict]) -> dict[str, pd.DataFrame]:
    rows = {kind: [] for kind in PLOT_KINDS}
    for n, record in enumerate(records):
        missing = [f for f in REQUIRED_FIELDS if record.get(f) is None]
        if missing:
            raise FormatError(f"trace {name} record {n} lacks {', '.join(missing)}")
        key = {"env_seed": record["env_seed"], "t": record["t"]}
        z = record["z"]
        rows["latent"].append({**key, "z_x": z[0], "z_y": z[1]})
        rows["density"].append({**key, "density": record["density"]})
        rows["gate"].append({**key, "gate_weight": record["gate_weight"]})
    columns = {
        "latent": ["env_seed", "t", "z_x", "z_y"],
        "density": ["env_seed", "t", "density"],
        "gate": ["env_seed", "t", "gate_weight"],
    }
    return {kind: pd.DataFrame(rows[kind], columns=columns[kind]) for kind in PLOT_KINDS}


def export_plots(traces: dict[str, list[dict]], out_dir: str | Path) -> list[Path]:
    """Write ``<name>_latent.csv``, ``<name>_density.csv`` and ``<name>_gate.csv`` per trace."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(traces):
        for kind, frame in _frames(name, traces[name]).items():
            path = out_dir / f"{name}_{kind}.csv"
            frame.to_csv(path, index=False)
            written.append(path)
    logger.info("Exported plot data for %d traces to %s", len(traces), out_dir)
    return written


def export_trace_dir(trace_dir: str | Path, out_dir: str | Path, figures: bool = False) -> list[Path]:
    trace_dir = Path(trace_dir)
    paths = sorted(trace_dir.glob("*.jsonl"))
    if not paths:
        raise FormatError(f"no trace files in {trace_dir}")
    written = export_plots({p.stem: read_trace(p) for p in paths}, out_dir)
    if figures:
        written += render_figures(out_dir, out_dir)
    return written


def render_figures(csv_dir: str | Path, out_dir: str | Path) -> list[Path]:
    csv_dir = Path(csv_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for latent_path in sorted(csv_dir.glob("*_latent.csv")):
        name = latent_path.name[: -len("_latent.csv")]
        latent = pd.read_csv(latent_path)
        density = pd.read_csv(csv_dir / f"{name}_density.csv")
        gate = pd.read_csv(csv_dir / f"{name}_gate.csv")

        fig, axes = plt.subplots(1, 3, figsize=(15, 4.5))
        for seed, group in latent.groupby("env_seed"):
            axes[0].plot(group["z_x"], group["z_y"], lw=0.8, alpha=0.6)
        axes[0].set_xlabel("z_x")
        axes[0].set_ylabel("z_y")
        axes[0].set_title("latent trajectories")
        for seed, group in density.groupby("env_seed"):
            axes[1].plot(group["t"], group["density"], lw=0.8, alpha=0.6)
        axes[1].set_xlabel("step")
        axes[1].set_title("density")
        for seed, group in gate.groupby("env_seed"):
            axes[2].plot(group["t"], group["gate_weight"], lw=0.8, alpha=0.6)
        axes[2].set_ylim(-0.05, 1.05)
        axes[2].set_xlabel("step")
        axes[2].set_title("gate weight")
        fig.suptitle(name)
        fig.tight_layout()

        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
