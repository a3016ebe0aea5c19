"""Second moments of random-local-basis correlators, datasets and CSV I/O.

For a state rho and independent Haar rotations R_1..R_N, the correlator of a
qubit subset S is <(x)_{m in S} R_m^dagger Z_m R_m>.  All subset correlators
of one rotated state come out of a single Walsh-Hadamard transform of the
computational-basis probability vector.  The feature of subset S is the mean
of its squared correlator over ``n_unitaries`` independent rotation draws.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuits import apply_readout_flip
from .qcore import (
    Partition,
    depolarize,
    haar_random_unitaries,
    n_qubits_of,
    partition_log_negativity,
    partitioned_state,
    purity,
    random_partitioned_pure_state,
)

FORMAT_TAG = "entseer-dataset"
FORMAT_VERSION = "v1"
META_COLUMNS = ["id", "label", "p", "purity", "e_pn", "is_ppt", "split"]


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for (master_seed, keys...); stable across worker counts."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


# ---------------------------------------------------------------------------
# Subset indexing
# ---------------------------------------------------------------------------


def subsets(n: int, max_order: int | None = None) -> list[tuple[int, ...]]:
    """Non-empty qubit subsets ordered by size, then lexicographically."""
    max_order = n if max_order is None else max_order
    if not 1 <= max_order <= n:
        raise ValueError(f"max_order={max_order} outside [1, {n}]")
    return [c for k in range(1, max_order + 1) for c in itertools.combinations(range(n), k)]


def subset_key(subset) -> str:
    return "-".join(str(q) for q in subset)


def parse_subset_key(key: str) -> tuple[int, ...]:
    return tuple(int(t) for t in key.split("-"))


def subset_mask(subset, n: int) -> int:
    return sum(1 << (n - 1 - q) for q in subset)


def walsh_hadamard(p: np.ndarray) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform along the last axis."""
    p = np.array(p, dtype=float, copy=True)
    d = p.shape[-1]
    lead = p.shape[:-1]
    h = 1
    while h < d:
        v = p.reshape(lead + (d // (2 * h), 2, h))
        a = v[..., 0, :].copy()
        b = v[..., 1, :]
        v[..., 0, :] += b
        v[..., 1, :] = a - b
        h *= 2
    return p


# ---------------------------------------------------------------------------
# Correlators
# ---------------------------------------------------------------------------


def _state_components(rho: np.ndarray, tol: float = 1e-12):
    """Write rho = floor * I + sum_k w_k |v_k><v_k| with as few terms as possible."""
    if rho.ndim == 1:
        return 0.0, np.ones(1), rho[None, :]
    ev, vec = np.linalg.eigh(rho)
    floor = max(float(ev[0]), 0.0)
    w = ev - floor
    keep = w > tol
    return floor, w[keep], vec[:, keep].T


def _rotate_batch(vectors: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Apply per-draw local rotations.

    vectors: (r, 2**n); rotations: (U, n, 2, 2) -> amplitudes (U, r, 2**n).
    """
    n_draws, n = rotations.shape[:2]
    r = vectors.shape[0]
    t = np.broadcast_to(vectors.reshape((1, r) + (2,) * n), (n_draws, r) + (2,) * n)
    for q in range(n):
        t = _apply_axis(t, rotations[:, q], 2 + q)
    return t.reshape(n_draws, r, 2**n)


def _apply_axis(t: np.ndarray, mats: np.ndarray, axis: int) -> np.ndarray:
    # out[u, ..., a, ...] = sum_b mats[u, a, b] t[u, ..., b, ...]
    moved = np.moveaxis(t, axis, -1)
    shape = moved.shape
    flat = moved.reshape(shape[0], -1, 2)
    out = flat @ mats.transpose(0, 2, 1)
    return np.moveaxis(out.reshape(shape), -1, axis)


def rotated_probability_batch(rho: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Born probabilities after each draw of local rotations, shape (U, 2**n)."""
    floor, w, vecs = _state_components(np.asarray(rho))
    amps = _rotate_batch(vecs, rotations)
    probs = np.einsum("k,ukx->ux", w, np.abs(amps) ** 2) + floor
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum(axis=1, keepdims=True)


def correlators_from_probabilities(probs: np.ndarray, n: int, subset_list) -> np.ndarray:
    masks = np.array([subset_mask(s, n) for s in subset_list])
    return walsh_hadamard(probs)[..., masks]


def exact_correlators(rho: np.ndarray, rotations) -> dict[str, float]:
    """All subset correlators after one local rotation per qubit."""
    rho = np.asarray(rho)
    n = n_qubits_of(rho)
    rotations = np.asarray(rotations, dtype=complex)
    if rotations.shape != (n, 2, 2):
        raise ValueError(f"need {n} single-qubit rotations")
    subs = subsets(n)
    probs = rotated_probability_batch(rho, rotations[None])
    vals = correlators_from_probabilities(probs, n, subs)[0]
    return {subset_key(s): float(v) for s, v in zip(subs, vals)}


@dataclass
class FeatureVector:
    n_qubits: int
    subsets: list[tuple[int, ...]]
    values: np.ndarray
    n_unitaries: int

    def as_dict(self) -> dict[str, float]:
        return {subset_key(s): float(v) for s, v in zip(self.subsets, self.values)}

    def __getitem__(self, subset) -> float:
        if isinstance(subset, str):
            subset = parse_subset_key(subset)
        return float(self.values[self.subsets.index(tuple(subset))])


def second_moments(
    rho: np.ndarray,
    n_unitaries: int,
    max_order: int | None,
    rng: np.random.Generator,
    mode: str = "exact",
    n_shots: int = 1000,
    readout_flip: float = 0.0,
    batch: int = 500,
) -> FeatureVector:
    """Mean squared correlator over Haar-random local bases.

    ``mode="shots"`` replaces each exact correlator with the empirical one
    from ``n_shots`` samples; the plug-in square is biased by O(1/n_shots).
    """
    if n_unitaries < 1:
        raise ValueError("n_unitaries must be >= 1")
    if mode not in ("exact", "shots"):
        raise ValueError(f"unknown mode {mode!r}")
    rho = np.asarray(rho)
    n = n_qubits_of(rho)
    subs = subsets(n, max_order)
    acc = np.zeros(len(subs))
    done = 0
    while done < n_unitaries:
        m = min(batch, n_unitaries - done)
        rot = haar_random_unitaries(2, m * n, rng).reshape(m, n, 2, 2)
        probs = rotated_probability_batch(rho, rot)
        if mode == "shots":
            probs = apply_readout_flip(probs, readout_flip)
            probs = rng.multinomial(n_shots, probs) / n_shots
        acc += np.sum(correlators_from_probabilities(probs, n, subs) ** 2, axis=0)
        done += m
    return FeatureVector(n, subs, np.clip(acc / n_unitaries, 0.0, 1.0), n_unitaries)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class LabeledSample:
    features: FeatureVector
    partition_label: str
    p: float | None = None
    purity: float | None = None
    e_pn: float | None = None
    is_ppt: bool | None = None
    source: str = "simulated-exact"


def _opt(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


@dataclass
class Dataset:
    n_qubits: int
    max_order: int
    X: np.ndarray
    labels: list[str]
    p: np.ndarray
    purity: np.ndarray
    e_pn: np.ndarray
    is_ppt: list  # bool or None
    split: np.ndarray  # "train" / "test"
    ids: np.ndarray = None
    n_unitaries: int = 0
    source: str = "simulated-exact"
    subsets: list = field(default=None)

    def __post_init__(self):
        if self.subsets is None:
            self.subsets = subsets(self.n_qubits, self.max_order)
        m = len(self.labels)
        self.X = np.asarray(self.X, dtype=float).reshape(m, len(self.subsets))
        if self.ids is None:
            self.ids = np.arange(m)
        self.ids = np.asarray(self.ids, dtype=int)
        for name in ("p", "purity", "e_pn"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(m))
        self.split = np.asarray(self.split, dtype=object).reshape(m)
        self.is_ppt = list(self.is_ppt)
        for pp, e in zip(self.is_ppt, self.e_pn):
            if pp is not None and not math.isnan(e) and pp != (e == 0.0):
                raise ValueError("is_ppt disagrees with e_pn")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> LabeledSample:
        fv = FeatureVector(self.n_qubits, self.subsets, self.X[i], self.n_unitaries)
        return LabeledSample(fv, self.labels[i], _opt(float(self.p[i])), _opt(float(self.purity[i])),
                             _opt(float(self.e_pn[i])), self.is_ppt[i], self.source)

    @property
    def train(self) -> np.ndarray:
        return self.split == "train"

    @property
    def test(self) -> np.ndarray:
        return self.split == "test"

    def scaler(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature mean and standard deviation of the training split."""
        xt = self.X[self.train]
        mean = xt.mean(axis=0)
        std = xt.std(axis=0)
        std[std < 1e-12] = 1.0
        return mean, std

    def ppt_array(self) -> np.ndarray:
        return np.array([bool(v) for v in self.is_ppt])

    def subset_of(self, mask) -> "Dataset":
        idx = np.flatnonzero(mask)
        return Dataset(
            self.n_qubits, self.max_order, self.X[idx], [self.labels[i] for i in idx],
            self.p[idx], self.purity[idx], self.e_pn[idx], [self.is_ppt[i] for i in idx],
            self.split[idx], self.ids[idx], self.n_unitaries, self.source, self.subsets,
        )


def standardize(X: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (np.asarray(X) - mean) / std


def assign_split(m: int, test_fraction: float, rng: np.random.Generator) -> np.ndarray:
    split = np.full(m, "train", dtype=object)
    n_test = int(round(test_fraction * m))
    split[rng.permutation(m)[:n_test]] = "test"
    return split


def _mode_source(mode):
    return "simulated-shots" if mode == "shots" else "simulated-exact"


def generate_partition_dataset(
    n_qubits: int = 6,
    partitions=None,
    states_per_partition: int = 200,
    n_unitaries: int = 500,
    seed: int = 0,
    max_order: int | None = None,
    mode: str = "exact",
    n_shots: int = 1000,
    test_fraction: float = 0.1,
) -> Dataset:
    """Random partitioned pure states for every partition, labelled by partition."""
    from .qcore import ordered_partitions

    parts = ordered_partitions(n_qubits) if partitions is None else [
        Partition.from_label(p) if isinstance(p, str) else p for p in partitions
    ]
    max_order = n_qubits if max_order is None else max_order
    rows, labels = [], []
    idx = 0
    for part in parts:
        if part.n_qubits != n_qubits:
            raise ValueError(f"partition {part.label} does not cover {n_qubits} qubits")
        for _ in range(states_per_partition):
            rng = derive_rng(seed, 1, idx)
            psi = random_partitioned_pure_state(part, rng)
            rows.append(second_moments(psi, n_unitaries, max_order, rng, mode, n_shots).values)
            labels.append(part.label)
            idx += 1
    m = len(labels)
    nan = np.full(m, np.nan)
    X = np.array(rows) if rows else np.zeros((0, len(subsets(n_qubits, max_order))))
    return Dataset(n_qubits, max_order, X, labels, nan, nan.copy(), nan.copy(), [None] * m,
                   assign_split(m, test_fraction, derive_rng(seed, 2)), n_unitaries=n_unitaries,
                   source=_mode_source(mode))


def generate_mixing_dataset(
    partition,
    n_states: int = 7000,
    n_unitaries: int = 500,
    seed: int = 0,
    max_order: int | None = None,
    mode: str = "exact",
    n_shots: int = 1000,
    test_fraction: float = 0.1,
    state: str = "random",
) -> Dataset:
    """Depolarized states on a regular p-grid over [0, 1].

    ``state="random"`` draws a fresh random partitioned pure state per grid
    point; ``"ghz"`` / ``"w"`` depolarize the fixed GHZ_P / W_P state.
    """
    part = Partition.from_label(partition) if isinstance(partition, str) else partition
    n = part.n_qubits
    max_order = n if max_order is None else max_order
    grid = np.linspace(0.0, 1.0, n_states)
    rows, pur, epn, ppt = [], [], [], []
    for i, p in enumerate(grid):
        rng = derive_rng(seed, 3, i)
        psi = random_partitioned_pure_state(part, rng) if state == "random" else partitioned_state(part, state)
        rho = depolarize(psi, float(p))
        rows.append(second_moments(rho, n_unitaries, max_order, rng, mode, n_shots).values)
        pur.append(purity(rho))
        e = partition_log_negativity(rho, part)
        epn.append(e)
        ppt.append(e == 0.0)
    X = np.array(rows) if rows else np.zeros((0, len(subsets(n, max_order))))
    return Dataset(n, max_order, X, [part.label] * len(grid), grid, pur, epn, ppt,
                   assign_split(len(grid), test_fraction, derive_rng(seed, 4)),
                   n_unitaries=n_unitaries, source=_mode_source(mode))


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


class DatasetFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def save_dataset(ds: Dataset, path) -> None:
    head = (f"# {FORMAT_TAG} {FORMAT_VERSION} n_qubits={ds.n_qubits} max_order={ds.max_order} "
            f"n_unitaries={ds.n_unitaries} source={ds.source}")
    cols = META_COLUMNS + ["m2_" + subset_key(s) for s in ds.subsets]
    lines = [head, ",".join(cols)]
    for i in range(len(ds)):
        ppt = ds.is_ppt[i]
        meta = [str(int(ds.ids[i])), ds.labels[i], _fmt(ds.p[i]), _fmt(ds.purity[i]), _fmt(ds.e_pn[i]),
                "" if ppt is None else ("true" if ppt else "false"), str(ds.split[i])]
        lines.append(",".join(meta + [repr(float(v)) for v in ds.X[i]]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_float(tok: str, lineno: int) -> float:
    if tok == "":
        return math.nan
    try:
        return float(tok)
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: bad number {tok!r}") from None


def load_dataset(path, n_qubits: int | None = None, max_order: int | None = None) -> Dataset:
    """Read a dataset CSV; optional ``n_qubits`` / ``max_order`` must match the header."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(f"# {FORMAT_TAG} "):
        raise DatasetFormatError(f"line 1: missing '# {FORMAT_TAG}' header")
    toks = lines[0][1:].split()
    if len(toks) < 2 or toks[1] != FORMAT_VERSION:
        raise DatasetFormatError(f"line 1: unsupported version {toks[1:2]}")
    meta = dict(t.split("=", 1) for t in toks[2:] if "=" in t)
    try:
        nq, mo = int(meta["n_qubits"]), int(meta["max_order"])
    except (KeyError, ValueError):
        raise DatasetFormatError("line 1: header needs n_qubits and max_order") from None
    if n_qubits is not None and n_qubits != nq:
        raise DatasetFormatError(f"line 1: n_qubits={nq}, expected {n_qubits}")
    if max_order is not None and max_order != mo:
        raise DatasetFormatError(f"line 1: max_order={mo}, expected {max_order}")
    subs = subsets(nq, mo)
    expected = META_COLUMNS + ["m2_" + subset_key(s) for s in subs]
    if len(lines) < 2 or lines[1].split(",") != expected:
        raise DatasetFormatError("line 2: column header does not match n_qubits/max_order")
    ids, labels, p, pur, epn, ppt, split, rows = [], [], [], [], [], [], [], []
    for lineno, line in enumerate(lines[2:], 3):
        f = line.split(",")
        if len(f) != len(expected):
            raise DatasetFormatError(f"line {lineno}: expected {len(expected)} fields, got {len(f)}")
        try:
            ids.append(int(f[0]))
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: bad id {f[0]!r}") from None
        labels.append(f[1])
        p.append(_parse_float(f[2], lineno))
        pur.append(_parse_float(f[3], lineno))
        epn.append(_parse_float(f[4], lineno))
        if f[5] not in ("", "true", "false"):
            raise DatasetFormatError(f"line {lineno}: bad is_ppt {f[5]!r}")
        ppt.append(None if f[5] == "" else f[5] == "true")
        if f[6] not in ("train", "test"):
            raise DatasetFormatError(f"line {lineno}: bad split {f[6]!r}")
        split.append(f[6])
        rows.append([_parse_float(t, lineno) for t in f[7:]])
    m = len(labels)
    X = np.array(rows, dtype=float).reshape(m, len(subs))
    try:
        return Dataset(nq, mo, X, labels, p, pur, epn, ppt, split, ids,
                       int(meta.get("n_unitaries", 0)), meta.get("source", "imported"), subs)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    def same(x, y):
        return np.array_equal(np.asarray(x, float), np.asarray(y, float), equal_nan=True)

    return (
        a.n_qubits == b.n_qubits and a.max_order == b.max_order and a.subsets == b.subsets
        and a.labels == b.labels and a.is_ppt == b.is_ppt and list(a.split) == list(b.split)
        and np.array_equal(a.ids, b.ids) and same(a.X, b.X) and same(a.p, b.p)
        and same(a.purity, b.purity) and same(a.e_pn, b.e_pn)
        and a.n_unitaries == b.n_unitaries and a.source == b.source
    )
