"""
Helpers shared by the encoder, density and policy training loops.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from sklearn.model_selection import train_test_split
from tqdm import tqdm

from equirecover.errors import TrainingError

logger = logging.getLogger(__name__)


@dataclass
class TrainingReport:
    """Per-epoch mean training loss plus held-out metrics."""

    loss_curve: list[float] = field(default_factory=list)
    holdout: dict[str, float] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "loss_curve": [float(v) for v in self.loss_curve],
            "holdout": {k: float(v) for k, v in sorted(self.holdout.items())},
        }

    @classmethod
    def from_record(cls, record: dict) -> "TrainingReport":
        return cls(
            loss_curve=[float(v) for v in record.get("loss_curve", [])],
            holdout={k: float(v) for k, v in record.get("holdout", {}).items()},
        )


def ensure_finite(value: float, stage: str) -> float:
    if not np.isfinite(value):
        raise TrainingError(stage, f"loss became non-finite ({value})")
    return float(value)


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def split_trajectories(n_trajectories: int, holdout_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (train, holdout) trajectory indices.

    With fewer than two trajectories there is nothing to hold out and the
    training indices double as the holdout.
    """
    indices = np.arange(n_trajectories)
    if n_trajectories < 2 or holdout_fraction <= 0.0:
        if holdout_fraction > 0.0:
            logger.warning("Only %d trajectory available; evaluating on the training data", n_trajectories)
        return indices, indices
    train, holdout = train_test_split(indices, test_size=holdout_fraction, random_state=seed % (2**32))
    return np.sort(train), np.sort(holdout)


def epoch_progress(epochs: int, stage: str, enabled: bool) -> tqdm:
    return tqdm(range(epochs), desc=stage, disable=not enabled)


def cosine_learning_rate(base: float, epoch: int, epochs: int, final_fraction: float = 1.0) -> float:
    """Cosine decay from ``base`` at epoch 0 to ``final_fraction * base`` at the last epoch."""
    if epochs <= 1 or final_fraction >= 1.0:
        return float(base)
    progress = epoch / (epochs - 1)
    floor = final_fraction * base
    return float(floor + 0.5 * (base - floor) * (1.0 + np.cos(np.pi * progress)))
