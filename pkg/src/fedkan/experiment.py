"""End-to-end pipeline: load, split, standardize, partition, federate, persist."""

from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import (
    ClientShard,
    TabularDataset,
    default_data_path,
    load_csv,
    partition_clients,
    standardize,
    stratified_split,
)
from .diffcore import SeededRng
from .errors import ConfigError
from .federation import RoundMetrics, federated_learning_kan, history_rows, metrics_csv
from .models import ModelParameters, build_model

# Stream ids under the run seed. Client training draws from stream 3 (federation).
STREAM_INIT = 0
STREAM_SPLIT = 1
STREAM_PARTITION = 2


@dataclass(frozen=True)
class PreparedData:
    dataset: TabularDataset
    shards: list[ClientShard]
    test: TabularDataset
    mean: np.ndarray
    std: np.ndarray

    @property
    def label_mapping(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.dataset.class_names)}

    def shard_digests(self) -> list[str]:
        return [s.digest() for s in self.shards]


@dataclass(frozen=True)
class ModelRun:
    kind: str
    params: ModelParameters
    history: list[RoundMetrics]
    wall_clock_seconds: float
    widths: list[int]


def prepare_data(cfg: RunConfig) -> PreparedData:
    path = Path(cfg.data_path) if cfg.data_path else default_data_path()
    ds = load_csv(path, header=cfg.header)
    if cfg.kan_widths[0] != ds.num_features:
        raise ConfigError(f"input width {cfg.kan_widths[0]} does not match the {ds.num_features} data features")
    train, test = stratified_split(ds, cfg.test_fraction, SeededRng(cfg.seed, STREAM_SPLIT))
    scaler, train = standardize(train)
    test = scaler.apply(test)
    shards = partition_clients(train, cfg.n_clients, SeededRng(cfg.seed, STREAM_PARTITION))
    return PreparedData(ds, shards, test, scaler.mean, scaler.std)


def train_model(cfg: RunConfig, kind: str, data: PreparedData) -> ModelRun:
    n_classes = data.dataset.num_classes
    if kind == "kan":
        spec = cfg.kan_spec(n_classes)
        widths = list(spec.widths)
    else:
        spec = cfg.mlp_spec(data.dataset.num_features, n_classes)
        widths = list(spec.sizes)
    model = build_model(kind, spec)
    theta0 = model.init_parameters(SeededRng(cfg.seed, STREAM_INIT))
    start = time.perf_counter()
    params, history = federated_learning_kan(
        model,
        theta0,
        data.shards,
        (data.test.features, data.test.labels),
        cfg.federation(kind),
        cfg.train_config(),
    )
    elapsed = time.perf_counter() - start
    return ModelRun(kind, params, history, elapsed, widths)


def version_stamp() -> dict[str, str]:
    return {"fedkan": __version__, "python": platform.python_version(), "numpy": np.__version__}


def _final(run: ModelRun) -> dict[str, Any]:
    last = run.history[-1]
    return {"round": last.round, "train": last.train.as_dict(), "test": last.test.as_dict()}


def _model_summary(run: ModelRun) -> dict[str, Any]:
    return {
        "model": run.kind,
        "widths": run.widths,
        "num_parameters": run.params.num_parameters(),
        "final": _final(run),
        "best_test_accuracy": max(r.test.accuracy for r in run.history),
        "wall_clock_seconds": run.wall_clock_seconds,
    }


def _data_summary(data: PreparedData) -> dict[str, Any]:
    return {
        "label_mapping": data.label_mapping,
        "num_samples": len(data.dataset),
        "num_test": len(data.test),
        "shard_sizes": [s.num_samples for s in data.shards],
        "shard_digests": data.shard_digests(),
    }


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _checkpoint_meta(cfg: RunConfig, run: ModelRun) -> dict[str, Any]:
    return {"model": run.kind, "widths": run.widths, "seed": cfg.seed, "rounds": cfg.rounds}


def run(cfg: RunConfig) -> dict[str, Any]:
    """Train ``cfg.model`` and write metrics.csv, summary.json and model.json/.bin."""
    data = prepare_data(cfg)
    result = train_model(cfg, cfg.model, data)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(history_rows(result.history, result.kind)))
    save_checkpoint(result.params, out / "model.json", _checkpoint_meta(cfg, result))
    summary = {
        **_model_summary(result),
        "data": _data_summary(data),
        "config": cfg.to_dict(),
        "version": version_stamp(),
    }
    _write_json(out / "summary.json", summary)
    return summary


def compare(cfg: RunConfig) -> dict[str, Any]:
    """Train KAN and MLP on the same shards and seeds; write merged artifacts."""
    data = prepare_data(cfg)
    runs = {kind: train_model(cfg, kind, data) for kind in ("kan", "mlp")}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = history_rows(runs["kan"].history, "kan") + history_rows(runs["mlp"].history, "mlp")
    (out / "metrics.csv").write_text(metrics_csv(rows))
    for kind, r in runs.items():
        save_checkpoint(r.params, out / f"{kind}.json", _checkpoint_meta(cfg, r))
    kan, mlp = runs["kan"], runs["mlp"]
    kan_acc, mlp_acc = kan.history[-1].test.accuracy, mlp.history[-1].test.accuracy
    summary = {
        "models": {kind: _model_summary(r) for kind, r in runs.items()},
        "comparison": {
            "kan_final_test_accuracy": kan_acc,
            "mlp_final_test_accuracy": mlp_acc,
            "kan_minus_mlp_test_accuracy": kan_acc - mlp_acc,
            "kan_wall_clock_seconds": kan.wall_clock_seconds,
            "mlp_wall_clock_seconds": mlp.wall_clock_seconds,
            "kan_to_mlp_time_ratio": kan.wall_clock_seconds / mlp.wall_clock_seconds,
        },
        "data": _data_summary(data),
        "config": cfg.to_dict(),
        "version": version_stamp(),
    }
    _write_json(out / "summary.json", summary)
    return summary
