"""Shared, cached end-to-end workloads for the acceptance and pipeline tests."""

from functools import lru_cache

from entseer import features, pipelines
from entseer.manifold import UmapParams

N_QUBITS = 6
N_UNITARIES = 500
PARTITION_STATES = 200
MIXING_STATES = 2000  # desk-scale size for the certification datasets
PARTITION_UMAP = dict(n_neighbors=50, min_dist=0.3)
CERTIFY_UMAP = dict(n_neighbors=500, min_dist=0.6)
CERTIFIED = ("6", "33", "222")


@lru_cache(maxsize=None)
def partition_dataset(seed: int):
    return features.generate_partition_dataset(N_QUBITS, states_per_partition=PARTITION_STATES,
                                               n_unitaries=N_UNITARIES, seed=seed)


@lru_cache(maxsize=None)
def partition_run(data_seed: int, umap_seed: int | None = None):
    umap_seed = data_seed if umap_seed is None else umap_seed
    return pipelines.run_partition_pipeline(partition_dataset(data_seed),
                                            UmapParams(**PARTITION_UMAP, seed=umap_seed))


@lru_cache(maxsize=None)
def mixing_dataset(label: str):
    return features.generate_mixing_dataset(label, n_states=MIXING_STATES, n_unitaries=N_UNITARIES, seed=0)


@lru_cache(maxsize=None)
def certification_run(label: str):
    return pipelines.run_certification_pipeline(mixing_dataset(label), UmapParams(**CERTIFY_UMAP, seed=0))


@lru_cache(maxsize=None)
def reference_accuracy(label: str, kind: str) -> float:
    acc, _, _ = pipelines.evaluate_reference_states(certification_run(label), label, kind, n_states=200,
                                                    n_unitaries=N_UNITARIES, seed=0)
    return acc
