"""Command-line driver: dataset generation, training, prediction, witnesses and plots.

Every subcommand reads an optional JSON config, lets flags override it, writes
its CSV/SVG outputs into the output directory and leaves a JSON manifest
beside them.  Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, features, manifold, mlpipe, pipelines
from .circuits import NoiseParams, ghz_circuit, simulate, w_circuit
from .qcore import NumericError, Partition, depolarize, ghz_state, ordered_partitions, w_state
from .svgplot import line_svg, scatter_svg, write_svg
from .witness import DecompositionError, build_decomposition, estimate_witness, ghz_witness_exact, w_witness_exact

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "ENTSEER_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    master_seed: int = 0
    n_qubits: int = 6
    partitions: list | None = None
    states_per_partition: int = 200
    n_states_mixing: int = 7000
    n_unitaries: int = 500
    mode: str = "exact"
    n_shots: int = 1000
    test_fraction: float = 0.1
    umap_partition: dict = field(default_factory=lambda: {"n_neighbors": 50, "min_dist": 0.3})
    umap_certify: dict = field(default_factory=lambda: {"n_neighbors": 500, "min_dist": 0.6})
    tree: dict = field(default_factory=lambda: {"max_depth": 12, "min_leaf": 5})
    logistic: dict = field(default_factory=lambda: {"l2": 1e-4, "epochs": 2000})
    purity_k: int = 20
    noise: dict = field(default_factory=lambda: dataclasses.asdict(NoiseParams()))
    output_dir: str = "entseer-out"

    def validate(self) -> None:
        for name in ("n_qubits", "states_per_partition", "n_states_mixing", "n_unitaries", "n_shots", "purity_k"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")
        if self.mode not in ("exact", "shots"):
            raise ConfigError(f"mode must be 'exact' or 'shots', got {self.mode!r}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in [0, 1)")
        if self.partitions is not None:
            for label in self.partitions:
                self.partition(label)
        for key in ("umap_partition", "umap_certify"):
            self.umap_params(key)
        try:
            NoiseParams(**self.noise)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"noise: {exc}") from None

    def partition(self, label) -> Partition:
        try:
            part = Partition.from_label(str(label))
        except ValueError as exc:
            raise ConfigError(f"bad partition {label!r}: {exc}") from None
        if part.n_qubits != self.n_qubits:
            raise ConfigError(f"partition {label!r} does not cover n_qubits={self.n_qubits}")
        return part

    def partition_list(self) -> list[Partition]:
        if self.partitions is None:
            return ordered_partitions(self.n_qubits)
        return [self.partition(p) for p in self.partitions]

    def umap_params(self, key: str) -> manifold.UmapParams:
        try:
            return manifold.UmapParams(**{**getattr(self, key), "seed": self.master_seed})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """File values, then ENTSEER_SEED, then command-line flags."""
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if os.environ.get(SEED_ENV):
        try:
            data["master_seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


class Run:
    def __init__(self, cfg: RunConfig, command: str, argv: list[str]):
        self.cfg = cfg
        self.command = command
        self.argv = argv
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.results: dict = {}
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(str(p))
        return p

    def write_manifest(self) -> Path:
        import numba
        import scipy

        manifest = {
            "command": self.command,
            "argv": self.argv,
            "config": dataclasses.asdict(self.cfg),
            "seed": self.cfg.master_seed,
            "versions": {"entseer": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "numba": numba.__version__},
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "outputs": self.outputs,
            "results": self.results,
        }
        p = self.out / f"manifest_{self.command}.json"
        p.write_text(json.dumps(manifest, indent=1, default=str) + "\n", encoding="utf-8")
        return p


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except FileNotFoundError:
        raise FileNotFoundError(f"input file not found: {path}") from None
    if not rows:
        raise features.DatasetFormatError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def _load_data(path) -> features.Dataset:
    if not Path(path).exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return features.load_dataset(path)


def _ppt_label(flag) -> str:
    return "PPT" if flag else "NPT"


def _cert_prefix(label: str) -> str:
    return f"certify_{label}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_partition_data(run: Run, args) -> None:
    cfg = run.cfg
    ds = features.generate_partition_dataset(
        cfg.n_qubits, cfg.partition_list(), cfg.states_per_partition, cfg.n_unitaries, cfg.master_seed,
        mode=cfg.mode, n_shots=cfg.n_shots, test_fraction=cfg.test_fraction)
    features.save_dataset(ds, run.path("partition_data.csv"))
    run.results["rows"] = len(ds)


def _mixing(cfg: RunConfig, label: str, state: str, n_states: int) -> features.Dataset:
    return features.generate_mixing_dataset(
        cfg.partition(label), n_states, cfg.n_unitaries, cfg.master_seed, mode=cfg.mode,
        n_shots=cfg.n_shots, test_fraction=cfg.test_fraction if state == "random" else 0.0, state=state)


def cmd_gen_mixing_data(run: Run, args) -> None:
    cfg = run.cfg
    n = args.n_states or cfg.n_states_mixing
    ds = _mixing(cfg, args.partition, args.state, n)
    suffix = "" if args.state == "random" else f"_{args.state}"
    features.save_dataset(ds, run.path(f"mixing_{args.partition}{suffix}.csv"))
    run.results.update(rows=len(ds), ppt_fraction=float(np.mean(ds.ppt_array())))


def _write_embedding(path, ids, labels, split, coords) -> None:
    _write_csv(path, ["id", "label", "split", "x0", "x1"],
               ([int(i), lab, s, float(c[0]), float(c[1])] for i, lab, s, c in zip(ids, labels, split, coords)))


def cmd_train_partition(run: Run, args) -> None:
    cfg = run.cfg
    if args.data:
        ds = _load_data(args.data)
    else:
        ds = features.generate_partition_dataset(
            cfg.n_qubits, cfg.partition_list(), cfg.states_per_partition, cfg.n_unitaries, cfg.master_seed,
            mode=cfg.mode, n_shots=cfg.n_shots, test_fraction=cfg.test_fraction)
        features.save_dataset(ds, run.path("partition_data.csv"))
    res = pipelines.run_partition_pipeline(ds, cfg.umap_params("umap_partition"), **cfg.tree)
    manifold.save_model(res.embedding, run.path("partition_umap.npz"))
    mlpipe.save_json_model(res.tree, run.path("partition_tree.json"))
    labels = np.asarray(ds.labels)
    coords = np.zeros((len(ds), 2))
    coords[ds.train] = res.embedding.coords
    coords[ds.test] = res.test_coords
    _write_embedding(run.path("partition_embedding.csv"), ds.ids, labels, ds.split, coords)
    mlpipe.write_predictions(run.path("partition_predictions.csv"), ds.ids[ds.test], labels[ds.test],
                             res.test_predictions)
    run.results.update(train_accuracy=res.train_accuracy, test_accuracy=res.test_accuracy,
                       init=res.embedding.init_method)
    print(f"partition classifier: train accuracy {res.train_accuracy:.4f}, test accuracy {res.test_accuracy:.4f}")


def cmd_train_certify(run: Run, args) -> None:
    cfg = run.cfg
    label = args.partition
    if args.data:
        ds = _load_data(args.data)
    else:
        ds = _mixing(cfg, label, "random", args.n_states or cfg.n_states_mixing)
        features.save_dataset(ds, run.path(f"mixing_{label}.csv"))
    res = pipelines.run_certification_pipeline(ds, cfg.umap_params("umap_certify"), k_purity=cfg.purity_k,
                                               **cfg.logistic)
    pre = _cert_prefix(label)
    manifold.save_model(res.embedding, run.path(f"{pre}_umap.npz"))
    mlpipe.save_json_model(res.classifier, run.path(f"{pre}_logistic.json"))
    mlpipe.save_json_model(res.purity, run.path(f"{pre}_purity.json"))
    coords = np.zeros((len(ds), 2))
    coords[ds.train] = res.embedding.coords
    coords[ds.test] = res.test_coords
    ppt = ds.ppt_array()
    _write_embedding(run.path(f"{pre}_embedding.csv"), ds.ids, [_ppt_label(v) for v in ppt], ds.split, coords)
    test = ds.test
    mlpipe.write_predictions(run.path(f"{pre}_predictions.csv"), ds.ids[test], [_ppt_label(v) for v in ppt[test]],
                             [_ppt_label(v) for v in res.test_predictions])
    mlpipe.write_predictions(run.path(f"{pre}_purity_predictions.csv"), ds.ids[test], ds.purity[test],
                             res.test_purity_estimates, header=("id", "p_true", "p_est"))
    corr = res.purity_correlation(ds.purity[test]) if test.sum() >= 2 else float("nan")
    run.results.update(train_accuracy=res.train_accuracy, test_accuracy=res.test_accuracy,
                       ppt_fraction=res.ppt_fraction, purity_correlation=corr, init=res.embedding.init_method)
    print(f"certification [{label}]: train accuracy {res.train_accuracy:.4f}, test accuracy "
          f"{res.test_accuracy:.4f}, purity correlation {corr:.4f}")


def _model_dir(run: Run, args) -> Path:
    return Path(args.model_dir) if args.model_dir else run.out


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path} (run the matching train command first)")
    return path


def cmd_classify(run: Run, args) -> None:
    md = _model_dir(run, args)
    model = manifold.load_model(_require(md / "partition_umap.npz"))
    tree = mlpipe.load_json_model(_require(md / "partition_tree.json"))
    ds = _load_data(args.data)
    coords = manifold.transform(model, ds.X)
    pred = tree.predict(coords)
    mlpipe.write_predictions(run.path("classify_predictions.csv"), ds.ids, ds.labels, pred)
    run.results["accuracy"] = mlpipe.accuracy(pred, np.asarray(ds.labels))


def _load_certifier(run: Run, args):
    md = _model_dir(run, args)
    pre = _cert_prefix(args.partition)
    model = manifold.load_model(_require(md / f"{pre}_umap.npz"))
    clf = mlpipe.load_json_model(_require(md / f"{pre}_logistic.json"))
    est = mlpipe.load_json_model(_require(md / f"{pre}_purity.json"))
    return model, clf, est


def _certify_inputs(run: Run, args) -> features.Dataset:
    if args.data:
        return _load_data(args.data)
    cfg = run.cfg
    part = cfg.partition(args.partition)
    ps = [float(v) for v in args.p]
    rows, pur, epn, ppt = [], [], [], []
    from .qcore import partition_log_negativity, partitioned_state, purity

    for i, p in enumerate(ps):
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"--p values must lie in [0, 1], got {p}")
        rho = depolarize(partitioned_state(part, args.state), p)
        rng = features.derive_rng(cfg.master_seed, 5, i)
        rows.append(features.second_moments(rho, cfg.n_unitaries, part.n_qubits, rng, cfg.mode, cfg.n_shots).values)
        pur.append(purity(rho))
        e = partition_log_negativity(rho, part)
        epn.append(e)
        ppt.append(e == 0.0)
    return features.Dataset(part.n_qubits, part.n_qubits, np.array(rows), [part.label] * len(ps), ps, pur, epn, ppt,
                            ["test"] * len(ps), n_unitaries=cfg.n_unitaries)


def cmd_certify(run: Run, args) -> None:
    model, clf, est = _load_certifier(run, args)
    ds = _certify_inputs(run, args)
    coords = manifold.transform(model, ds.X)
    pred = clf.predict(coords)
    p_est = mlpipe.estimate_purity(est, coords)
    rows = []
    for i in range(len(ds)):
        truth = "" if ds.is_ppt[i] is None else _ppt_label(ds.is_ppt[i])
        rows.append([int(ds.ids[i]), float(ds.p[i]), truth, _ppt_label(pred[i]), float(ds.purity[i]), float(p_est[i])])
    _write_csv(run.path(f"certify_{args.partition}_results.csv"),
               ["id", "p", "true_label", "predicted_label", "p_true", "p_est"], rows)
    for r in rows:
        print(f"id={r[0]} p={r[1]:.4f} predicted={r[3]}" + (f" true={r[2]}" if r[2] else ""))
    known = [r for r in rows if r[2]]
    if known:
        run.results["accuracy"] = float(np.mean([r[2] == r[3] for r in known]))


def cmd_estimate_purity(run: Run, args) -> None:
    _, _, est = _load_certifier(run, args)
    model = manifold.load_model(_model_dir(run, args) / f"{_cert_prefix(args.partition)}_umap.npz")
    ds = _load_data(args.data)
    p_est = mlpipe.estimate_purity(est, manifold.transform(model, ds.X))
    mlpipe.write_predictions(run.path(f"purity_{args.partition}.csv"), ds.ids, ds.purity, p_est,
                             header=("id", "p_true", "p_est"))
    finite = np.isfinite(ds.purity)
    if finite.sum() >= 2:
        run.results["correlation"] = mlpipe.linear_fit(ds.purity[finite], p_est[finite]).correlation


def parse_range(text: str) -> list[int]:
    """'2..7' -> [2..7]; '3' -> [3]; '2,4,6' -> [2, 4, 6]."""
    try:
        if ".." in text:
            a, b = text.split("..")
            out = list(range(int(a), int(b) + 1))
        else:
            out = [int(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad range {text!r}; use e.g. 2..7 or 2,3,5") from None
    if not out:
        raise ConfigError(f"empty range {text!r}")
    return out


def cmd_witness(run: Run, args) -> None:
    cfg = run.cfg
    ns = parse_range(args.n)
    target = args.target.lower()
    noise = NoiseParams(**cfg.noise) if args.noisy else None
    exact_fn = ghz_witness_exact if target == "ghz" else w_witness_exact
    rows = []
    for n in ns:
        if n < 2:
            raise ConfigError("witness register size must be >= 2")
        decomp = build_decomposition(target, n)
        if noise is not None:
            rho = simulate(ghz_circuit(n) if target == "ghz" else w_circuit(n), noise)
        else:
            rho = depolarize(ghz_state(n) if target == "ghz" else w_state(n), args.p)
        exact = exact_fn(rho)
        if args.exact:
            est, se = exact, 0.0
        else:
            flip = noise.readout_flip if noise is not None else 0.0
            est, se = estimate_witness(decomp, rho, args.shots, features.derive_rng(cfg.master_seed, 6, n), flip)
        rows.append([n, target.upper(), exact, est, se, decomp.n_settings])
    header = ["n", "target", "exact", "estimate", "stderr", "settings_count"]
    _write_csv(run.path(f"witness_{target}.csv"), header, rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])


def cmd_plot(run: Run, args) -> None:
    header, rows = _read_csv(args.input)
    col = {h: i for i, h in enumerate(header)}
    title = args.title or Path(args.input).stem
    if {"x0", "x1"} <= set(col):
        x = [float(r[col["x0"]]) for r in rows]
        y = [float(r[col["x1"]]) for r in rows]
        groups = [r[col["label"]] for r in rows] if "label" in col else None
        svg = scatter_svg(x, y, groups, title)
    elif {"n", "exact", "estimate"} <= set(col):
        ns = [float(r[col["n"]]) for r in rows]
        svg = line_svg({"exact": (ns, [float(r[col["exact"]]) for r in rows]),
                        "estimate": (ns, [float(r[col["estimate"]]) for r in rows])},
                       title, "register size n", "witness expectation", hlines=(0.0,))
    elif {"p_true", "p_est"} <= set(col):
        svg = scatter_svg([float(r[col["p_true"]]) for r in rows], [float(r[col["p_est"]]) for r in rows],
                          None, title, "true purity", "estimated purity")
    else:
        raise features.DatasetFormatError(f"{args.input}: no plottable columns (need x0/x1, n/exact/estimate "
                                          "or p_true/p_est)")
    out = Path(args.output) if args.output else run.out / (Path(args.input).stem + ".svg")
    write_svg(out, svg)
    run.outputs.append(str(out))


COMMANDS = {
    "gen-partition-data": cmd_gen_partition_data,
    "gen-mixing-data": cmd_gen_mixing_data,
    "train-partition": cmd_train_partition,
    "train-certify": cmd_train_certify,
    "classify": cmd_classify,
    "certify": cmd_certify,
    "estimate-purity": cmd_estimate_purity,
    "witness": cmd_witness,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--seed", dest="master_seed", type=int, help="master seed")
    common.add_argument("--n-qubits", type=int)
    common.add_argument("--n-unitaries", type=int)
    common.add_argument("--mode", choices=["exact", "shots"])
    common.add_argument("--n-shots", type=int)

    p = argparse.ArgumentParser(prog="entseer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"entseer {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-partition-data", parents=[common], help="random partitioned pure states")
    s.add_argument("--states-per-partition", type=int)
    s.add_argument("--partitions", nargs="+")

    s = sub.add_parser("gen-mixing-data", parents=[common], help="depolarized states of one partition")
    s.add_argument("--partition", required=True)
    s.add_argument("--state", choices=["random", "ghz", "w"], default="random")
    s.add_argument("--n-states", type=int)

    s = sub.add_parser("train-partition", parents=[common], help="UMAP + decision tree on partition data")
    s.add_argument("--data", help="dataset CSV (generated when omitted)")
    s.add_argument("--states-per-partition", type=int)
    s.add_argument("--partitions", nargs="+")

    s = sub.add_parser("train-certify", parents=[common], help="UMAP + logistic + purity kNN on mixing data")
    s.add_argument("--partition", required=True)
    s.add_argument("--data", help="dataset CSV (generated when omitted)")
    s.add_argument("--n-states", type=int)

    s = sub.add_parser("classify", parents=[common], help="predict partitions with a trained model")
    s.add_argument("--data", required=True)
    s.add_argument("--model-dir")

    for name, helptext in (("certify", "NPT/PPT prediction with a trained model"),
                           ("estimate-purity", "purity estimates with a trained model")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--partition", required=True)
        s.add_argument("--model-dir")
        if name == "certify":
            s.add_argument("--data", help="dataset CSV; otherwise depolarized reference states are built")
            s.add_argument("--state", choices=["ghz", "w"], default="ghz")
            s.add_argument("--p", nargs="+", default=["0.0"], help="depolarizing strengths")
        else:
            s.add_argument("--data", required=True)

    s = sub.add_parser("witness", parents=[common], help="GHZ/W fidelity witness table")
    s.add_argument("--target", choices=["ghz", "w", "GHZ", "W"], required=True)
    s.add_argument("--n", default="2..7", help="register sizes, e.g. 2..7")
    s.add_argument("--exact", action="store_true", help="report exact expectations only")
    s.add_argument("--shots", type=int, default=1000, help="shots per measurement setting")
    s.add_argument("--p", type=float, default=0.0, help="depolarizing strength of the ideal state")
    s.add_argument("--noisy", action="store_true", help="simulate the preparation circuit with gate noise")

    s = sub.add_parser("plot", parents=[common], help="SVG from an embedding, witness or purity CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--output")
    s.add_argument("--title")
    return p


_OVERRIDES = ("output_dir", "master_seed", "n_qubits", "n_unitaries", "mode", "n_shots", "states_per_partition",
              "partitions")


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
        cfg = load_config(args.config, overrides)
        run = Run(cfg, args.command, argv)
        COMMANDS[args.command](run, args)
        run.write_manifest()
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, features.DatasetFormatError, mlpipe.DegenerateDataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError, DecompositionError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
