"""Federated averaging and the round loop.

Each round broadcasts the global parameters to every client, trains all
clients locally (optionally in a thread pool), averages the results weighted
by shard size and evaluates the new global model on the pooled training data
and on the test set.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import ClientShard, union
from .diffcore import SeededRng
from .errors import ConfigError, DimensionError, FedKanError, NumericError
from .metrics import Metrics, compute_metrics
from .models import Model, ModelParameters
from .training import TrainConfig, local_train

log = logging.getLogger(__name__)

AGGREGATION_MODES = ("sample_weighted", "uniform")
TRAIN_EVAL_MODES = ("union", "first_client")
METRICS_HEADER = ("round", "split", "model", "loss", "accuracy", "precision", "recall", "f1")

# Stream ids under the run seed; see ``client_rng``.
STREAM_CLIENTS = 3


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 2
    rounds: int = 20
    steps: int = 20
    aggregation: str = "sample_weighted"
    model_kind: str = "kan"
    seed: int = 0
    parallel: int = 1
    train_eval: str = "union"

    def __post_init__(self):
        for name in ("n_clients", "rounds", "steps", "parallel"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value}")
        if self.aggregation not in AGGREGATION_MODES:
            raise ConfigError(f"aggregation must be one of {AGGREGATION_MODES}, got {self.aggregation!r}")
        if self.train_eval not in TRAIN_EVAL_MODES:
            raise ConfigError(f"train_eval must be one of {TRAIN_EVAL_MODES}, got {self.train_eval!r}")
        if self.model_kind not in ("kan", "mlp"):
            raise ConfigError(f"model kind must be 'kan' or 'mlp', got {self.model_kind!r}")


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    train: Metrics
    test: Metrics


def aggregation_weights(counts: Sequence[int], mode: str = "sample_weighted") -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ConfigError("fed_avg needs at least one client")
    if (counts <= 0).any():
        raise ConfigError(f"client sample counts must be positive, got {counts.tolist()}")
    if mode == "sample_weighted":
        return counts / counts.sum()
    if mode == "uniform":
        return np.full(counts.size, 1.0 / counts.size)
    raise ConfigError(f"unknown aggregation mode {mode!r}")


def fed_avg(
    client_params: Sequence[ModelParameters],
    counts: Sequence[int],
    mode: str = "sample_weighted",
) -> ModelParameters:
    """Weighted mean of client parameters, ``sum_i (n_i / m) * theta_i``.

    Computed as ``theta_0 + sum_i w_i (theta_i - theta_0)``, which is the same
    mean but exactly reproduces a parameter set shared by every client.
    """
    if len(client_params) == 0:
        raise ConfigError("fed_avg needs at least one client")
    if len(counts) != len(client_params):
        raise ConfigError(f"{len(client_params)} parameter sets but {len(counts)} counts")
    weights = aggregation_weights(counts, mode)
    anchor = client_params[0]
    for i, p in enumerate(client_params[1:], start=1):
        if not anchor.same_layout(p):
            raise DimensionError(f"client {i} parameters do not match the template of client 0")
    out = []
    for name, base in anchor.items():
        acc = base.copy()
        for w, p in zip(weights[1:], client_params[1:]):
            acc += w * (p[name] - base)
        out.append((name, acc))
    return ModelParameters(out)


def client_rng(seed: int, round_index: int, client_id: int) -> SeededRng:
    return SeededRng(seed, (STREAM_CLIENTS, round_index, client_id))


def _train_client(model, global_params, shard, r, config, train_config) -> ModelParameters:
    try:
        return local_train(
            model, global_params, shard, config.steps, train_config, client_rng(config.seed, r, shard.client_id)
        )
    except FedKanError as exc:
        raise type(exc)(f"round {r}, client {shard.client_id}: {exc}") from exc


def federated_learning_kan(
    model: Model,
    global_params: ModelParameters,
    shards: Sequence[ClientShard],
    test_set: tuple[np.ndarray, np.ndarray],
    config: FederationConfig,
    train_config: TrainConfig | None = None,
    on_round: Callable[[RoundMetrics], None] | None = None,
) -> tuple[ModelParameters, list[RoundMetrics]]:
    """Run ``config.rounds`` rounds of broadcast, local training, averaging and evaluation.

    Works for either model kind despite the name. Parallel and sequential
    schedules give identical results because each client owns its RNG stream.
    """
    train_config = train_config or TrainConfig()
    if len(shards) != config.n_clients:
        raise ConfigError(f"expected {config.n_clients} client shards, got {len(shards)}")
    if config.train_eval == "union":
        train_x, train_y = union(shards)
    else:
        train_x, train_y = shards[0].features, shards[0].labels
    test_x, test_y = test_set
    counts = [s.num_samples for s in shards]

    theta = global_params.copy()
    history: list[RoundMetrics] = []
    pool = ThreadPoolExecutor(max_workers=config.parallel) if config.parallel > 1 else None
    try:
        for r in range(1, config.rounds + 1):
            args = [(model, theta, s, r, config, train_config) for s in shards]
            if pool is None:
                clients = [_train_client(*a) for a in args]
            else:
                clients = list(pool.map(lambda a: _train_client(*a), args))
            theta = fed_avg(clients, counts, config.aggregation)
            rm = RoundMetrics(
                r,
                compute_metrics(model, theta, train_x, train_y),
                compute_metrics(model, theta, test_x, test_y),
            )
            if not (np.isfinite(rm.train.loss) and np.isfinite(rm.test.loss)):
                raise NumericError(f"round {r}: loss is not finite")
            log.info(
                "round %d: train loss %.4f acc %.4f | test loss %.4f acc %.4f",
                r, rm.train.loss, rm.train.accuracy, rm.test.loss, rm.test.accuracy,
            )
            history.append(rm)
            if on_round is not None:
                on_round(rm)
    finally:
        if pool is not None:
            pool.shutdown()
    return theta, history


def history_rows(history: Sequence[RoundMetrics], model_kind: str) -> list[tuple]:
    rows = []
    for rm in history:
        for split, m in (("train", rm.train), ("test", rm.test)):
            rows.append((rm.round, split, model_kind, m.loss, m.accuracy, m.precision, m.recall, m.f1))
    return rows


def metrics_csv(rows: Sequence[tuple]) -> str:
    """Render metric rows with ``repr`` floats so equal runs give equal bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()
