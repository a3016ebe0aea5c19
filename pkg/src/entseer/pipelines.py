"""End-to-end pipelines: partition classification and NPT/PPT certification.

Both follow the same pattern: standardize the training features, embed them
with UMAP, fit a learner on the 2-D coordinates, then push held-out samples
through ``transform`` and the learner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import manifold, mlpipe
from .features import Dataset, generate_mixing_dataset


@dataclass
class PartitionResult:
    embedding: manifold.EmbeddingModel
    tree: mlpipe.DecisionTreeModel
    train_accuracy: float
    test_accuracy: float
    test_coords: np.ndarray
    test_predictions: np.ndarray


def run_partition_pipeline(ds: Dataset, params: manifold.UmapParams, max_depth: int = 12,
                           min_leaf: int = 5) -> PartitionResult:
    train, test = ds.train, ds.test
    labels = np.asarray(ds.labels)
    model = manifold.fit(ds.X[train], params, scaler=ds.scaler())
    tree = mlpipe.train_tree(model.coords, labels[train], max_depth, min_leaf)
    train_acc = mlpipe.accuracy(tree.predict(model.coords), labels[train])
    test_coords = manifold.transform(model, ds.X[test]) if test.any() else np.zeros((0, 2))
    pred = tree.predict(test_coords) if test.any() else np.zeros(0, dtype=str)
    test_acc = mlpipe.accuracy(pred, labels[test]) if test.any() else float("nan")
    return PartitionResult(model, tree, train_acc, test_acc, test_coords, pred)


@dataclass
class CertificationResult:
    embedding: manifold.EmbeddingModel
    classifier: mlpipe.LogisticModel
    purity: mlpipe.PurityEstimator
    train_accuracy: float
    test_accuracy: float
    test_coords: np.ndarray
    test_predictions: np.ndarray
    test_purity_estimates: np.ndarray
    ppt_fraction: float

    def classify(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(coordinates, is_ppt prediction) for raw feature rows."""
        coords = manifold.transform(self.embedding, np.atleast_2d(X))
        return coords, self.classifier.predict(coords)

    def purity_correlation(self, true_purity: np.ndarray) -> float:
        return mlpipe.linear_fit(true_purity, self.test_purity_estimates).correlation


def run_certification_pipeline(ds: Dataset, params: manifold.UmapParams, l2: float = 1e-4,
                               epochs: int = 2000, k_purity: int = 20) -> CertificationResult:
    train, test = ds.train, ds.test
    ppt = ds.ppt_array()
    model = manifold.fit(ds.X[train], params, scaler=ds.scaler())
    clf = mlpipe.train_logistic(model.coords, ppt[train], l2=l2, epochs=epochs)
    est = mlpipe.PurityEstimator(model.coords, ds.purity[train], k=min(k_purity, int(train.sum())))
    train_acc = mlpipe.accuracy(clf.predict(model.coords), ppt[train])
    if test.any():
        test_coords = manifold.transform(model, ds.X[test])
        pred = clf.predict(test_coords)
        test_acc = mlpipe.accuracy(pred, ppt[test])
        pur = mlpipe.estimate_purity(est, test_coords)
    else:
        test_coords, pred, test_acc, pur = np.zeros((0, 2)), np.zeros(0, bool), float("nan"), np.zeros(0)
    return CertificationResult(model, clf, est, train_acc, test_acc, test_coords, pred, pur,
                               float(ppt[train].mean()))


def evaluate_reference_states(result: CertificationResult, partition, kind: str, n_states: int = 200,
                              n_unitaries: int = 500, seed: int = 0, mode: str = "exact",
                              n_shots: int = 1000) -> tuple[float, Dataset, np.ndarray]:
    """Accuracy of the certification pipeline on depolarized GHZ or W states of a partition."""
    ds = generate_mixing_dataset(partition, n_states, n_unitaries, seed, mode=mode, n_shots=n_shots,
                                 test_fraction=0.0, state=kind)
    _, pred = result.classify(ds.X)
    return mlpipe.accuracy(pred, ds.ppt_array()), ds, pred
