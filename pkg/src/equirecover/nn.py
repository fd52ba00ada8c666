"""
Dense rectifier networks with exact reverse-mode gradients and Adam.

Every learned component (encoder, mixture density network, behavioral
cloning policy) is assembled from ``MlpModel`` instances. Hidden layers use a
rectifier, the output layer is linear. All arithmetic is float64.

Inputs may be a single vector of shape ``(d,)`` or a batch ``(n, d)``; for a
batch, ``backward`` returns parameter gradients summed over the batch and a
per-row input gradient.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from equirecover.errors import ConfigurationError, FormatError, ShapeError

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        params: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_sizes=tuple(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class GradBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    def parameters(self) -> list[np.ndarray]:
        grads: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            grads.extend((w, b))
        return grads


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int
    learning_rate: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon_num: float = ADAM_EPSILON
    # decoupled decay on weight matrices; biases are not decayed
    weight_decay: float = 0.0


def init_model(layer_sizes: Sequence[int], rng_seed: int) -> MlpModel:
    """He-initialized weights, zero biases. Deterministic for a given seed."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ConfigurationError(f"need at least an input and an output layer, got {list(layer_sizes)}")
    if any(s < 1 for s in sizes):
        raise ConfigurationError(f"layer sizes must be positive, got {list(layer_sizes)}")

    rng = np.random.default_rng(rng_seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases)


def _as_batch(model: MlpModel, x: Any) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        single = True
    elif x.ndim == 2:
        single = False
    else:
        raise ShapeError(f"input must be 1-D or 2-D, got shape {x.shape}")
    if x.shape[1] != model.input_size:
        raise ShapeError(f"input length {x.shape[1]} does not match model input {model.input_size}")
    return x, single


def _trace(model: MlpModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activations per layer and the activations feeding each layer."""
    last = len(model.weights) - 1
    pre: list[np.ndarray] = []
    acts: list[np.ndarray] = [x]
    h = x
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = h @ w.T + b
        pre.append(a)
        h = a if k == last else np.maximum(a, 0.0)
        acts.append(h)
    return pre, acts


def forward(model: MlpModel, x: Any) -> np.ndarray:
    batch, single = _as_batch(model, x)
    out = _trace(model, batch)[1][-1]
    return out[0] if single else out


def backward(model: MlpModel, x: Any, upstream_gradient: Any) -> GradBundle:
    """Gradients of <upstream_gradient, forward(model, x)> w.r.t. parameters and input."""
    batch, single = _as_batch(model, x)
    g = np.asarray(upstream_gradient, dtype=np.float64)
    if single:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != (batch.shape[0], model.output_size):
        raise ShapeError(
            f"upstream gradient shape {np.shape(upstream_gradient)} does not match output "
            f"shape {(model.output_size,) if single else (batch.shape[0], model.output_size)}"
        )

    pre, acts = _trace(model, batch)
    n_layers = len(model.weights)
    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers
    delta = g
    for k in range(n_layers - 1, -1, -1):
        grad_w[k] = delta.T @ acts[k]
        grad_b[k] = delta.sum(axis=0)
        delta = delta @ model.weights[k]
        if k > 0:
            delta = delta * (pre[k - 1] > 0.0)

    return GradBundle(weights=grad_w, biases=grad_b, input=delta[0] if single else delta)


def _check_like(reference: Sequence[np.ndarray], other: Sequence[np.ndarray], what: str) -> None:
    if len(reference) != len(other):
        raise ShapeError(f"{what}: expected {len(reference)} arrays, got {len(other)}")
    for ref, arr in zip(reference, other):
        if ref.shape != np.shape(arr):
            raise ShapeError(f"{what}: expected shape {ref.shape}, got {np.shape(arr)}")


def init_adam(
    model: MlpModel,
    learning_rate: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    epsilon_num: float = ADAM_EPSILON,
    weight_decay: float = 0.0,
) -> AdamState:
    params = model.parameters()
    return AdamState(
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        step_count=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon_num=epsilon_num,
        weight_decay=weight_decay,
    )


def adam_step(model: MlpModel, gradients: GradBundle, state: AdamState) -> tuple[MlpModel, AdamState]:
    """One bias-corrected Adam update. Returns new model and state; inputs are untouched."""
    params = model.parameters()
    grads = gradients.parameters()
    _check_like(params, grads, "gradients")
    _check_like(params, state.first_moment, "first moment")
    _check_like(params, state.second_moment, "second moment")

    t = state.step_count + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_params = []
    new_m = []
    new_v = []
    for k, (p, g, m, v) in enumerate(zip(params, grads, state.first_moment, state.second_moment)):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        update = m_hat / (np.sqrt(v_hat) + state.epsilon_num)
        if k % 2 == 0 and state.weight_decay > 0.0:
            update = update + state.weight_decay * p
        new_params.append(p - state.learning_rate * update)
        new_m.append(m)
        new_v.append(v)

    updated = MlpModel(
        layer_sizes=model.layer_sizes,
        weights=new_params[0::2],
        biases=new_params[1::2],
    )
    new_state = AdamState(
        first_moment=new_m,
        second_moment=new_v,
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon_num=state.epsilon_num,
        weight_decay=state.weight_decay,
    )
    return updated, new_state


def model_to_dict(model: MlpModel) -> dict[str, Any]:
    return {
        "layer_sizes": list(model.layer_sizes),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(data: dict[str, Any]) -> MlpModel:
    try:
        sizes = tuple(int(s) for s in data["layer_sizes"])
        weights = [np.asarray(w, dtype=np.float64) for w in data["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in data["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model record: {exc}") from exc

    if len(sizes) < 2 or len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
        raise FormatError(f"model record has {len(weights)} layers for sizes {list(sizes)}")
    for k, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
            raise FormatError(f"layer {k} has weight {w.shape} and bias {b.shape} for sizes {list(sizes)}")
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases)


def save_model(model: MlpModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        text = json.dumps(model_to_dict(model), allow_nan=False)
    except ValueError as exc:
        raise FormatError(f"model has non-finite parameters: {exc}") from exc
    path.write_text(text, encoding="utf-8")
    logger.debug("Saved model %s to %s", list(model.layer_sizes), path)
    return path


def load_model(path: str | Path) -> MlpModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return model_from_dict(data)
