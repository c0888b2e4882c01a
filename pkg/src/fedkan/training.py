"""Loss, optimizer and the per-client local training loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .data import ClientShard, create_dataset
from .diffcore import SeededRng, Tensor
from .errors import ConfigError, DataError, DimensionError
from .models import Model, ModelParameters


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-softmax of the true class over the batch."""
    logits = dc._lift(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError("cross_entropy expects (batch, classes) logits and one label per row", logits.shape, labels.shape)
    bad = np.flatnonzero((labels < 0) | (labels >= logits.shape[1]))
    if bad.size:
        raise DataError(f"label {labels[bad[0]]} at row {bad[0]} outside [0, {logits.shape[1]})")
    return dc.mean(dc.logsumexp(logits, axis=1) - dc.pick(logits, labels))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 1e-5
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch size must be a positive integer, got {self.batch_size}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError("Adam needs 0 <= beta < 1 and eps > 0")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def zeros_like(cls, params: ModelParameters, config: TrainConfig | None = None) -> AdamState:
        config = config or TrainConfig()
        return cls(
            m={n: np.zeros_like(v) for n, v in params.items()},
            v={n: np.zeros_like(v) for n, v in params.items()},
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            weight_decay=config.weight_decay,
        )


def adam_step(
    params: ModelParameters, grads: dict[str, np.ndarray], state: AdamState
) -> tuple[ModelParameters, AdamState]:
    """One Adam update with bias correction; weight decay enters the gradient as ``lambda * theta``."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], {}, {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionError(f"gradient for {name!r} has wrong shape", g.shape, theta.shape)
        if state.weight_decay:
            g = g + state.weight_decay * theta
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append((name, theta - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)))
        new_m[name], new_v[name] = m, v
    new_state = AdamState(
        new_m, new_v, t, state.learning_rate, b1, b2, state.eps, state.weight_decay
    )
    return ModelParameters(new_params), new_state


def loss_and_grads(
    model: Model,
    params: ModelParameters,
    x: np.ndarray,
    y: np.ndarray,
    training: bool = True,
    rng: SeededRng | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    leaves = {n: Tensor(v, requires_grad=True) for n, v in params.items()}
    loss = cross_entropy(model.forward(leaves, x, training=training, rng=rng), y)
    loss.backward()
    return float(loss.value), {n: t.grad for n, t in leaves.items()}


def local_train(
    model: Model,
    params: ModelParameters,
    shard: ClientShard,
    steps: int,
    config: TrainConfig,
    rng: SeededRng,
) -> ModelParameters:
    """Run ``steps`` Adam updates on consecutive mini-batches of ``shard``.

    Optimizer state starts fresh on every call. ``params`` is not modified.
    """
    if steps < 1:
        raise ConfigError(f"steps per round must be >= 1, got {steps}")
    if shard.num_samples < 1:
        raise ConfigError(f"client {shard.client_id} has an empty shard")
    batches = create_dataset(shard, config.batch_size, rng.fork(0)).cycle()
    dropout_rng = rng.fork(1)
    state = AdamState.zeros_like(params, config)
    current = params.copy()
    for _ in range(steps):
        xb, yb = next(batches)
        _, grads = loss_and_grads(model, current, xb, yb, training=True, rng=dropout_rng)
        current, state = adam_step(current, grads, state)
    return current
