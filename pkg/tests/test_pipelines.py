"""End-to-end properties of the partition and certification pipelines at full size."""

import numpy as np
import pytest
import workloads as W

from entseer import manifold, mlpipe

pytestmark = pytest.mark.slow


def test_embedding_cardinality():
    ds = W.partition_dataset(0)
    res = W.partition_run(0)
    assert len(ds) == 2200 and ds.X.shape[1] == 63
    assert res.embedding.coords.shape == (int(ds.train.sum()), 2)
    assert res.test_coords.shape == (int(ds.test.sum()), 2)
    assert np.all(np.isfinite(res.embedding.coords)) and np.all(np.isfinite(res.test_coords))


def test_self_transform_stays_close_on_partition_data():
    ds = W.partition_dataset(0)
    res = W.partition_run(0)
    moved = np.linalg.norm(manifold.transform(res.embedding, ds.X[ds.train]) - res.embedding.coords, axis=1)
    assert np.median(moved) < 0.5


def test_transformed_training_set_keeps_training_accuracy():
    ds = W.partition_dataset(0)
    res = W.partition_run(0)
    coords = manifold.transform(res.embedding, ds.X[ds.train])
    acc = mlpipe.accuracy(res.tree.predict(coords), np.asarray(ds.labels)[ds.train])
    fitted = res.train_accuracy
    assert abs(acc - fitted) <= 0.05, f"transformed {acc:.4f} vs fitted {fitted:.4f}"


def test_refit_with_another_seed_keeps_accuracy():
    a = W.partition_run(0).test_accuracy
    b = W.partition_run(0, umap_seed=1).test_accuracy
    assert abs(a - b) <= 0.05


def test_refit_with_same_seed_is_identical():
    ds = W.partition_dataset(0)
    res = W.partition_run(0)
    again = manifold.fit(ds.X[ds.train], res.embedding.params, scaler=ds.scaler())
    assert np.array_equal(again.coords, res.embedding.coords)


def test_certification_boundary_is_finite_and_separates_extremes():
    ds = W.mixing_dataset("6")
    res = W.certification_run("6")
    assert np.all(np.isfinite(res.classifier.weights)) and np.isfinite(res.classifier.bias)
    pred = res.classifier.predict(res.embedding.coords)
    p_train = ds.p[ds.train]
    # the most and least depolarized training states fall on opposite sides
    assert not pred[np.argmin(p_train)] and pred[np.argmax(p_train)]


def test_purity_estimates_stay_in_physical_range():
    res = W.certification_run("6")
    est = res.test_purity_estimates
    assert np.all((est >= 2.0**-6 - 1e-12) & (est <= 1 + 1e-12))
