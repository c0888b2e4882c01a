"""Tabular ingestion, standardization, stratified splitting and client shards."""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .diffcore import SeededRng
from .errors import ConfigError, DataError

DATA_DIR_ENV = "FKAN_DATA_DIR"
IRIS_FILENAME = "iris.csv"


@dataclass(frozen=True)
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_names: tuple[str, ...] = ()
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DataError(f"features {x.shape} and labels {y.shape} disagree")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, index) -> TabularDataset:
        index = np.asarray(index, dtype=np.int64)
        return TabularDataset(
            self.features[index], self.labels[index], self.num_classes, self.feature_names, self.class_names
        )

    def with_features(self, features: np.ndarray) -> TabularDataset:
        return TabularDataset(features, self.labels, self.num_classes, self.feature_names, self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class ClientShard:
    """One client's private training partition."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray
    num_classes: int = 3

    def __post_init__(self):
        n = self.labels.shape[0]
        if n < 1:
            raise ConfigError(f"client {self.client_id} has an empty shard")
        if self.features.shape[0] != n:
            raise DataError(f"client {self.client_id}: {self.features.shape[0]} feature rows vs {n} labels")

    @property
    def num_samples(self) -> int:
        return int(self.labels.shape[0])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()


def default_data_path() -> Path:
    """``$FKAN_DATA_DIR/iris.csv`` when the variable is set, else the bundled copy."""
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env) / IRIS_FILENAME
    return Path(str(resources.files("fedkan") / "datasets" / IRIS_FILENAME))


def load_csv(
    path: str | os.PathLike,
    header: bool = True,
    label_mapping: Mapping[str, int] | None = None,
) -> TabularDataset:
    """Read numeric feature columns followed by one string label column.

    Labels are numbered in order of first appearance unless ``label_mapping``
    is given, in which case an unseen label is an error.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="") as f:
        rows = [(i, r) for i, r in enumerate(csv.reader(f), start=1) if r and any(c.strip() for c in r)]
    if header and rows:
        names = tuple(c.strip() for c in rows[0][1][:-1])
        rows = rows[1:]
    else:
        names = ()
    if not rows:
        raise DataError(f"{path}: no data rows")

    width = len(rows[0][1])
    if width < 2:
        raise DataError(f"{path}:{rows[0][0]}: need at least one feature and a label")
    mapping = dict(label_mapping) if label_mapping is not None else {}
    fixed = label_mapping is not None
    feats, labels = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
        try:
            vals = [float(c) for c in row[:-1]]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric feature in {row[:-1]}") from None
        if not np.isfinite(vals).all():
            raise DataError(f"{path}:{lineno}: non-finite feature value")
        label = row[-1].strip()
        if label not in mapping:
            if fixed:
                raise DataError(f"{path}:{lineno}: unknown label {label!r}")
            mapping[label] = len(mapping)
        feats.append(vals)
        labels.append(mapping[label])

    class_names = tuple(sorted(mapping, key=mapping.get))
    return TabularDataset(
        np.array(feats), np.array(labels), len(mapping), names or tuple(f"x{j}" for j in range(width - 1)), class_names
    )


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, ds: TabularDataset) -> TabularDataset:
        return ds.with_features((ds.features - self.mean) / self.std)


def fit_standardization(ds: TabularDataset) -> StandardizationParams:
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0)
    constant = np.flatnonzero(std <= 1e-12 * np.maximum(1.0, np.abs(mean)))
    if constant.size:
        names = [ds.feature_names[j] if j < len(ds.feature_names) else str(j) for j in constant]
        raise DataError(f"constant feature(s) cannot be standardized: {names}")
    return StandardizationParams(mean, std)


def standardize(train: TabularDataset) -> tuple[StandardizationParams, TabularDataset]:
    params = fit_standardization(train)
    return params, params.apply(train)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(
    ds: TabularDataset, test_fraction: float, rng: SeededRng
) -> tuple[TabularDataset, TabularDataset]:
    """Per-class proportional train/test split, shuffled within each class.

    Each class sends ``round(n_c * test_fraction)`` samples to the test set,
    clamped so that both sides keep at least one.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must lie in (0, 1), got {test_fraction}")
    train_idx, test_idx = [], []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise DataError(f"class {c} has {members.size} sample(s); a split needs at least 2")
        members = members[rng.permutation(members.size)]
        n_test = min(max(_round_half_up(members.size * test_fraction), 1), members.size - 1)
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    return ds.subset(np.sort(np.concatenate(train_idx))), ds.subset(np.sort(np.concatenate(test_idx)))


def partition_clients(train: TabularDataset, n_clients: int, rng: SeededRng) -> list[ClientShard]:
    """Deal samples class by class, round-robin, into ``n_clients`` IID shards.

    Dealing continues across class boundaries, so shard sizes differ by at most
    one overall and by at most one within every class.
    """
    if n_clients < 1:
        raise ConfigError(f"number of clients must be >= 1, got {n_clients}")
    if n_clients > len(train):
        raise ConfigError(f"cannot split {len(train)} samples across {n_clients} clients")
    order = []
    for c in range(train.num_classes):
        members = np.flatnonzero(train.labels == c)
        order.append(members[rng.permutation(members.size)])
    order = np.concatenate(order)
    shards = []
    for k in range(n_clients):
        idx = np.sort(order[k::n_clients])
        shards.append(ClientShard(k, train.features[idx], train.labels[idx], train.num_classes))
    return shards


def union(shards: Sequence[ClientShard]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.concatenate([s.features for s in shards]),
        np.concatenate([s.labels for s in shards]),
    )


@dataclass
class BatchLoader:
    """Seeded mini-batch view of a shard, reshuffled at every pass."""

    shard: ClientShard
    batch_size: int
    rng: SeededRng
    _order: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")

    def epoch(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        order = self.rng.permutation(self.shard.num_samples)
        self._order = order
        for start in range(0, order.size, self.batch_size):
            idx = order[start : start + self.batch_size]
            yield self.shard.features[idx], self.shard.labels[idx]

    def cycle(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        while True:
            yield from self.epoch()

    @property
    def last_order(self) -> np.ndarray | None:
        return self._order

    def concatenated(self) -> dict[str, np.ndarray]:
        """One shuffled pass gathered into full tensors."""
        xs, ys = zip(*self.epoch())
        return {"train_input": np.concatenate(xs), "train_label": np.concatenate(ys)}


def create_dataset(shard: ClientShard, batch_size: int, rng: SeededRng) -> BatchLoader:
    return BatchLoader(shard, batch_size, rng)
