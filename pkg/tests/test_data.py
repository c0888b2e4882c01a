from collections import Counter

import numpy as np
import pytest

from fedkan.data import (
    ClientShard,
    TabularDataset,
    create_dataset,
    default_data_path,
    load_csv,
    partition_clients,
    standardize,
    stratified_split,
)
from fedkan.diffcore import SeededRng
from fedkan.errors import ConfigError, DataError


def _rows(ds):
    return Counter((tuple(x), int(y)) for x, y in zip(ds.features, ds.labels))


def random_dataset(rng: np.random.Generator) -> TabularDataset:
    n_classes = int(rng.integers(2, 5))
    counts = rng.integers(2, 40, size=n_classes)
    labels = np.repeat(np.arange(n_classes), counts)
    rng.shuffle(labels)
    # Row index in column 0 keeps every row unique, so multiset checks are exact.
    feats = np.column_stack([np.arange(labels.size), rng.normal(size=(labels.size, 3))])
    return TabularDataset(feats, labels, n_classes)


def test_load_iris():
    ds = load_csv(default_data_path())
    assert len(ds) == 150 and ds.num_features == 4 and ds.num_classes == 3
    assert ds.class_counts().tolist() == [50, 50, 50]
    assert ds.class_names == ("Iris-setosa", "Iris-versicolor", "Iris-virginica")


def test_data_dir_env_fallback(tmp_path, monkeypatch):
    (tmp_path / "iris.csv").write_text("a,b,label\n1,2,x\n3,4,y\n")
    monkeypatch.setenv("FKAN_DATA_DIR", str(tmp_path))
    assert default_data_path() == tmp_path / "iris.csv"
    assert len(load_csv(default_data_path())) == 2


def test_load_csv_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError):
        load_csv(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,label\n1,2,x\n1,oops,y\n")
    with pytest.raises(DataError, match=":3:"):
        load_csv(bad)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2,x\n1,y\n")
    with pytest.raises(DataError, match=":2:"):
        load_csv(ragged, header=False)
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv")


def test_load_csv_headerless_and_fixed_mapping(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("1,2,b\n3,4,a\n\n5,6,b\n")
    ds = load_csv(f, header=False)
    assert ds.labels.tolist() == [0, 1, 0] and ds.class_names == ("b", "a")
    other = tmp_path / "e.csv"
    other.write_text("1,2,c\n")
    with pytest.raises(DataError, match="unknown label"):
        load_csv(other, header=False, label_mapping={"b": 0, "a": 1})


def test_standardize_examples():
    ds = TabularDataset(np.array([[0.0], [2.0]]), np.array([0, 1]), 2)
    params, out = standardize(ds)
    assert params.mean.tolist() == [1.0] and params.std.tolist() == [1.0]
    np.testing.assert_array_equal(out.features.ravel(), [-1.0, 1.0])
    _, again = standardize(out)
    np.testing.assert_allclose(again.features, out.features, atol=1e-12)


def test_standardize_moments_and_constant_feature(np_rng):
    ds = TabularDataset(np_rng.normal(3, 5, (50, 4)), np_rng.integers(0, 2, 50), 2)
    _, out = standardize(ds)
    assert np.abs(out.features.mean(axis=0)).max() < 1e-12
    np.testing.assert_allclose(out.features.std(axis=0), 1.0, atol=1e-12)
    with pytest.raises(DataError, match="constant"):
        standardize(TabularDataset(np.ones((5, 2)), np.zeros(5, dtype=int), 1))


def test_standardization_uses_train_statistics_only(np_rng):
    ds = TabularDataset(np_rng.normal(size=(100, 3)), np_rng.integers(0, 2, 100), 2)
    train, test = stratified_split(ds, 0.3, SeededRng(0))
    params, _ = standardize(train)
    test_params, _ = standardize(test)
    assert not np.allclose(params.mean, test_params.mean)
    np.testing.assert_allclose(params.apply(test).features, (test.features - params.mean) / params.std)


def test_iris_split_and_partition_counts():
    ds = load_csv(default_data_path())
    train, test = stratified_split(ds, 0.2, SeededRng(0, 1))
    assert len(train) == 120 and len(test) == 30
    assert test.class_counts().tolist() == [10, 10, 10]
    shards = partition_clients(train, 2, SeededRng(0, 2))
    assert [s.num_samples for s in shards] == [60, 60]
    for s in shards:
        assert np.bincount(s.labels, minlength=3).tolist() == [20, 20, 20]


def test_singleton_test_per_class():
    labels = np.repeat([0, 1, 2], 5)
    ds = TabularDataset(np.arange(15.0)[:, None], labels, 3)
    train, test = stratified_split(ds, 0.2, SeededRng(0))
    assert test.class_counts().tolist() == [1, 1, 1]
    assert train.class_counts().tolist() == [4, 4, 4]


def test_split_errors():
    ds = TabularDataset(np.arange(3.0)[:, None], np.array([0, 1, 1]), 2)
    with pytest.raises(DataError):
        stratified_split(ds, 0.5, SeededRng(0))
    with pytest.raises(ConfigError):
        stratified_split(ds, 1.0, SeededRng(0))
    with pytest.raises(ConfigError):
        partition_clients(ds, 4, SeededRng(0))


def test_single_client_gets_everything(np_rng):
    ds = random_dataset(np_rng)
    (shard,) = partition_clients(ds, 1, SeededRng(0))
    assert _rows(TabularDataset(shard.features, shard.labels, ds.num_classes)) == _rows(ds)


def test_split_and_partition_conserve_and_stratify():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        ds = random_dataset(rng)
        frac = float(rng.uniform(0.1, 0.5))
        train, test = stratified_split(ds, frac, SeededRng(trial))
        assert _rows(train) + _rows(test) == _rows(ds)
        assert not set(_rows(train)) & set(_rows(test))
        parent = ds.class_counts()
        assert np.all(np.abs(test.class_counts() - parent * frac) <= 1.0)

        n_clients = int(rng.integers(1, min(6, len(train)) + 1))
        shards = partition_clients(train, n_clients, SeededRng(trial, 1))
        merged = Counter()
        for s in shards:
            merged += _rows(TabularDataset(s.features, s.labels, ds.num_classes))
        assert merged == _rows(train)
        sizes = np.array([s.num_samples for s in shards])
        assert sizes.max() - sizes.min() <= 1
        per_class = np.array([np.bincount(s.labels, minlength=ds.num_classes) for s in shards])
        assert np.all(per_class.max(axis=0) - per_class.min(axis=0) <= 1)
        share = train.class_counts() / n_clients
        assert np.all(np.abs(per_class - share) <= 1.0)


def test_partition_is_seeded(np_rng):
    ds = random_dataset(np_rng)
    a = partition_clients(ds, 3, SeededRng(1))
    b = partition_clients(ds, 3, SeededRng(1))
    assert [s.digest() for s in a] == [s.digest() for s in b]


def test_create_dataset_batches():
    rng = np.random.default_rng(0)
    shard = ClientShard(0, rng.normal(size=(60, 4)), rng.integers(0, 3, 60))
    loader = create_dataset(shard, 16, SeededRng(3))
    batches = list(loader.epoch())
    assert [len(y) for _, y in batches] == [16, 16, 16, 12]
    order = loader.last_order
    np.testing.assert_array_equal(np.concatenate([x for x, _ in batches]), shard.features[order])
    np.testing.assert_array_equal(np.concatenate([y for _, y in batches]), shard.labels[order])
    assert sorted(order.tolist()) == list(range(60))

    again = create_dataset(shard, 16, SeededRng(3))
    np.testing.assert_array_equal(np.concatenate([y for _, y in again.epoch()]), shard.labels[order])

    cyc = create_dataset(shard, 16, SeededRng(3)).cycle()
    first = [next(cyc)[1] for _ in range(4)]
    second = [next(cyc)[1] for _ in range(4)]
    assert [len(b) for b in second] == [16, 16, 16, 12]
    assert not all(np.array_equal(a, b) for a, b in zip(first, second))

    full = create_dataset(shard, 16, SeededRng(3)).concatenated()
    assert full["train_input"].shape == (60, 4) and full["train_label"].shape == (60,)
