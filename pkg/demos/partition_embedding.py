"""Embed random partitioned states and classify their partition.

Generates random pure states for every ordered partition of six qubits,
computes second moments of random-basis correlators, embeds them in two
dimensions with UMAP and fits a decision tree on the embedding.  The sizes
are reduced so the demo finishes in about a minute; pass --full for the
200-states, 500-unitary configuration.

    python demos/partition_embedding.py [--full] [--out demo-out]
"""

import argparse
import time
from pathlib import Path

import numpy as np

from entseer import features, pipelines
from entseer.manifold import UmapParams
from entseer.svgplot import scatter_svg, write_svg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="demo-out")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)
    states, unitaries = (200, 500) if args.full else (80, 200)
    t0 = time.perf_counter()
    ds = features.generate_partition_dataset(6, states_per_partition=states, n_unitaries=unitaries, seed=args.seed)
    print(f"{len(ds)} states, {ds.X.shape[1]} features, {time.perf_counter() - t0:.1f} s")
    res = pipelines.run_partition_pipeline(ds, UmapParams(n_neighbors=50, min_dist=0.3, seed=args.seed))
    print(f"tree accuracy: train {res.train_accuracy:.3f}, test {res.test_accuracy:.3f} "
          f"(init {res.embedding.init_method}, {time.perf_counter() - t0:.1f} s total)")
    labels = np.asarray(ds.labels)
    truth = labels[ds.test]
    for lab in sorted(set(truth), key=lambda s: (-max(map(int, s)), s)):
        m = truth == lab
        wrong = res.test_predictions[m][res.test_predictions[m] != lab]
        note = f", confused with {', '.join(sorted(set(map(str, wrong))))}" if len(wrong) else ""
        print(f"  {lab:>7}: {np.mean(res.test_predictions[m] == lab):.2f}{note}")
    path = out / "partition_embedding.svg"
    c = res.embedding.coords
    write_svg(path, scatter_svg(c[:, 0], c[:, 1], labels[ds.train], "partition embedding (training split)"))
    print(f"figure: {path}")


if __name__ == "__main__":
    main()
