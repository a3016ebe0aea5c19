"""Certify NPT entanglement of depolarized states from correlator statistics.

Trains the certification pipeline (UMAP embedding, logistic boundary, kNN
purity estimate) on depolarized random states of one partition, then sweeps
the depolarizing strength of GHZ and W states of that partition and reports
where the classifier stops calling them NPT.

    python demos/certify_depolarized.py [--partition 6] [--states 1000] [--out demo-out]
"""

import argparse
from pathlib import Path

import numpy as np

from entseer import features, pipelines
from entseer.manifold import UmapParams
from entseer.qcore import Partition, depolarize, partition_log_negativity, partitioned_state, purity
from entseer.svgplot import scatter_svg, write_svg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--partition", default="6")
    ap.add_argument("--states", type=int, default=1000)
    ap.add_argument("--out", default="demo-out")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)
    part = Partition.from_label(args.partition)
    ds = features.generate_mixing_dataset(part, n_states=args.states, n_unitaries=300, seed=0)
    k = min(500, int(ds.train.sum()) - 1)
    res = pipelines.run_certification_pipeline(ds, UmapParams(n_neighbors=k, min_dist=0.6))
    r = res.purity_correlation(ds.purity[ds.test])
    print(f"partition {part.label}: PPT fraction {res.ppt_fraction:.3f}, A_test {res.test_accuracy:.3f}, "
          f"purity correlation {r:.3f}")
    ps = np.linspace(0, 1, 21)
    for kind in ("ghz", "w"):
        rows = []
        for i, p in enumerate(ps):
            rho = depolarize(partitioned_state(part, kind), p)
            x = features.second_moments(rho, 300, None, features.derive_rng(1, i)).values
            _, pred = res.classify(x)
            rows.append((p, partition_log_negativity(rho, part) > 0, bool(pred[0]), purity(rho)))
        npt_true = max((p for p, npt, _, _ in rows if npt), default=float("nan"))
        npt_pred = max((p for p, _, ppt, _ in rows if not ppt), default=float("nan"))
        print(f"  {kind.upper()}: NPT up to p={npt_true:.2f}; classified NPT up to p={npt_pred:.2f}")
    path = out / f"certify_{part.label}_purity.svg"
    write_svg(path, scatter_svg(ds.purity[ds.test], res.test_purity_estimates, None,
                                f"purity estimate, partition {part.label}", "true purity", "estimated purity"))
    print(f"figure: {path}")


if __name__ == "__main__":
    main()
