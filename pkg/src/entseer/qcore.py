"""Dense state-vector / density-matrix primitives for small qubit registers.

States are plain numpy arrays: a state vector has shape ``(2**n,)`` and a
density matrix ``(2**n, 2**n)``.  Qubit 0 is the most significant bit of the
computational-basis index, everywhere in the package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce

import numba
import numpy as np

NEGATIVITY_CLAMP = 1e-10


class NumericError(ArithmeticError):
    """A numerical routine failed to converge or produced non-finite output."""


# ---------------------------------------------------------------------------
# Register bookkeeping
# ---------------------------------------------------------------------------


def n_qubits_of(arr: np.ndarray) -> int:
    dim = arr.shape[0]
    n = int(round(math.log2(dim))) if dim > 0 else -1
    if n < 0 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class Partition:
    """Set partition of the qubit register into entangled parts.

    ``parts`` keeps the order given by the caller; ``label`` is the string of
    part sizes sorted ascending, e.g. ``"1122"``.
    """

    parts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        parts = tuple(tuple(int(q) for q in p) for p in self.parts)
        object.__setattr__(self, "parts", parts)
        flat = [q for p in parts for q in p]
        if not parts or any(len(p) == 0 for p in parts):
            raise ValueError("partition parts must be non-empty")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError(f"parts {parts} do not partition range({len(flat)})")

    @property
    def n_qubits(self) -> int:
        return sum(len(p) for p in self.parts)

    @property
    def label(self) -> str:
        return "".join(str(s) for s in sorted(len(p) for p in self.parts))

    @property
    def entangled_size(self) -> int:
        """Number of qubits that sit in parts of size > 1."""
        return sum(len(p) for p in self.parts if len(p) > 1)

    @classmethod
    def from_label(cls, label: str) -> "Partition":
        """Contiguous partition with ascending part sizes, e.g. "24" -> [[0,1],[2..5]]."""
        sizes = sorted(int(c) for c in label)
        if not sizes or min(sizes) < 1:
            raise ValueError(f"bad partition label {label!r}")
        parts, start = [], 0
        for s in sizes:
            parts.append(tuple(range(start, start + s)))
            start += s
        return cls(tuple(parts))

    def __str__(self):
        return self.label


def ordered_partitions(n: int) -> list[Partition]:
    """All integer partitions of ``n`` as contiguous ordered partitions.

    Sorted by number of parts, then lexicographically on the label.
    """

    def rec(remaining, max_part):
        if remaining == 0:
            yield ()
            return
        for s in range(min(remaining, max_part), 0, -1):
            for rest in rec(remaining - s, s):
                yield (s,) + rest

    labels = ["".join(str(s) for s in sorted(p)) for p in rec(n, n)]
    labels.sort(key=lambda lab: (len(lab), lab))
    return [Partition.from_label(lab) for lab in labels]


@dataclass(frozen=True)
class Bipartition:
    subset_a: frozenset[int]
    n_qubits: int

    def __post_init__(self):
        a = frozenset(int(q) for q in self.subset_a)
        object.__setattr__(self, "subset_a", a)
        if not a or len(a) >= self.n_qubits:
            raise ValueError("subset_a must be a non-empty proper subset")
        if min(a) < 0 or max(a) >= self.n_qubits:
            raise ValueError(f"qubit index out of range in {sorted(a)}")


def bipartitions(n: int) -> list[Bipartition]:
    """Unordered bipartitions [A, A-bar] of ``n`` qubits; A always contains qubit 0."""
    out = []
    rest = range(1, n)
    for r in range(0, n - 1):
        for comb in itertools.combinations(rest, r):
            out.append(Bipartition(frozenset((0,) + comb), n))
    return out


# ---------------------------------------------------------------------------
# Named states
# ---------------------------------------------------------------------------


def basis_state(n: int, index: int = 0) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[index] = 1.0
    return psi


def ghz_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def w_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    for k in range(n):
        psi[1 << (n - 1 - k)] = 1.0
    return psi / np.sqrt(n)


def plus_state() -> np.ndarray:
    return np.array([1, 1], dtype=complex) / np.sqrt(2)


def product_on_parts(vectors, parts) -> np.ndarray:
    """Tensor the per-part vectors and move each part onto its qubit indices."""
    n = sum(len(p) for p in parts)
    psi = reduce(np.kron, vectors)
    order = [q for p in parts for q in p]
    # axis i of the kron tensor carries qubit order[i]
    psi = psi.reshape((2,) * n).transpose(np.argsort(order))
    return np.ascontiguousarray(psi).reshape(-1)


def partitioned_state(partition: Partition, kind: str) -> np.ndarray:
    """GHZ_P or W_P; single-qubit parts carry |+>."""
    make = {"ghz": ghz_state, "w": w_state}[kind.lower()]
    vecs = [plus_state() if len(p) == 1 else make(len(p)) for p in partition.parts]
    return product_on_parts(vecs, partition.parts)


def projector(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# Random sampling
# ---------------------------------------------------------------------------


def haar_random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix.

    The phases of R's diagonal are pushed into Q, otherwise the distribution
    is not Haar.
    """
    if dim < 1:
        raise ValueError(f"invalid dimension {dim}")
    return haar_random_unitaries(dim, 1, rng)[0]


def haar_random_unitaries(dim: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of ``size`` independent Haar unitaries, shape ``(size, dim, dim)``."""
    if dim < 1:
        raise ValueError(f"invalid dimension {dim}")
    z = (rng.standard_normal((size, dim, dim)) + 1j * rng.standard_normal((size, dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def random_partitioned_pure_state(partition: Partition, rng: np.random.Generator) -> np.ndarray:
    """Product of independent Haar-random pure states, one per part."""
    vecs = [haar_random_unitary(2 ** len(p), rng)[:, 0] for p in partition.parts]
    return product_on_parts(vecs, partition.parts)


# ---------------------------------------------------------------------------
# Channels and scalar functionals
# ---------------------------------------------------------------------------


def as_density_matrix(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    return projector(state) if state.ndim == 1 else state


def depolarize(psi: np.ndarray, p: float) -> np.ndarray:
    """(1 - p) |psi><psi| + p I / 2^N.  Also accepts a density matrix."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing parameter p={p} outside [0, 1]")
    rho = as_density_matrix(psi)
    dim = rho.shape[0]
    return (1 - p) * rho + p * np.eye(dim) / dim


def purity(rho: np.ndarray) -> float:
    # Tr rho^2 = sum |rho_ij|^2 for Hermitian rho
    return float(np.sum(np.abs(rho) ** 2))


def fidelity_pure(rho: np.ndarray, psi: np.ndarray) -> float:
    return float(np.real(psi.conj() @ rho @ psi))


def validate_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> None:
    """Raise ``ValueError`` unless rho is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    n_qubits_of(rho)
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError(f"trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix has negative eigenvalues")


def partial_transpose(rho: np.ndarray, subset) -> np.ndarray:
    """Transpose the tensor indices of the qubits in ``subset``."""
    n = n_qubits_of(rho)
    subset = subset.subset_a if isinstance(subset, Bipartition) else subset
    axes = list(range(2 * n))
    for q in subset:
        if not 0 <= q < n:
            raise ValueError(f"qubit index {q} out of range for {n} qubits")
        axes[q], axes[n + q] = n + q, q
    t = rho.reshape((2,) * (2 * n)).transpose(axes)
    return t.reshape(2**n, 2**n)


def partial_trace(rho: np.ndarray, keep) -> np.ndarray:
    """Reduced state on the qubits in ``keep`` (kept in register order)."""
    n = n_qubits_of(rho)
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"qubit index out of range for {n} qubits")
    if len(keep) == n:
        return rho.copy()
    row = list(range(n))
    col = [n + q if q in keep else q for q in range(n)]
    out = keep + [n + q for q in keep]
    t = np.einsum(rho.reshape((2,) * (2 * n)), row + col, out)
    d = 2 ** len(keep)
    return t.reshape(d, d)


# ---------------------------------------------------------------------------
# Hermitian eigensolver
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _jacobi_sweeps(a, tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j].real ** 2 + a[i, j].imag ** 2
        if math.sqrt(off) < tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                e = apq / mag
                theta = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # G = diag(1, conj(e)) @ [[c, s], [-s, c]]
                g00 = c + 0j
                g01 = s + 0j
                g10 = -s * e.conjugate()
                g11 = c * e.conjugate()
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = akp * g00 + akq * g10
                    a[k, q] = akp * g01 + akq * g11
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = g00.conjugate() * apk + g10.conjugate() * aqk
                    a[q, k] = g01.conjugate() * apk + g11.conjugate() * aqk
    return -1


def jacobi_eigvalsh(h: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations.

    Converged when the off-diagonal Frobenius norm drops below ``tol``.
    Returns the eigenvalues sorted ascending.
    """
    a = np.array(h, dtype=np.complex128, copy=True)
    if a.shape[0] == 1:
        return np.array([a[0, 0].real])
    if _jacobi_sweeps(a, tol, max_sweeps) < 0:
        raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    return np.sort(np.diagonal(a).real)


def eigvalsh(h: np.ndarray, method: str = "lapack") -> np.ndarray:
    if method == "jacobi":
        return jacobi_eigvalsh(h)
    try:
        return np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Negativities
# ---------------------------------------------------------------------------


def log_negativity(rho: np.ndarray, bipartition, method: str = "lapack") -> float:
    """log2 of the trace norm of the partial transpose; exactly 0 below 1e-10."""
    ev = eigvalsh(partial_transpose(rho, bipartition), method)
    value = math.log2(float(np.sum(np.abs(ev))))
    if abs(value) < NEGATIVITY_CLAMP:
        return 0.0
    return max(value, 0.0)


def _log_negativities_batch(rho: np.ndarray, bips: list[Bipartition]) -> np.ndarray:
    stack = np.stack([partial_transpose(rho, b) for b in bips])
    ev = np.linalg.eigvalsh(stack)
    vals = np.log2(np.sum(np.abs(ev), axis=1))
    vals[np.abs(vals) < NEGATIVITY_CLAMP] = 0.0
    return np.maximum(vals, 0.0)


@dataclass
class PartitionNegativity:
    value: float
    trivial: bool
    # per part: (part, bipartite log-negativities, geometric mean)
    parts: list[tuple[tuple[int, ...], np.ndarray, float]]


def partition_log_negativity_details(rho: np.ndarray, partition: Partition, method: str = "lapack") -> PartitionNegativity:
    n = n_qubits_of(rho)
    if partition.n_qubits != n:
        raise ValueError(f"partition covers {partition.n_qubits} qubits, state has {n}")
    big = [p for p in partition.parts if len(p) > 1]
    if not big:
        return PartitionNegativity(0.0, True, [])
    norm = partition.entangled_size
    log_total = 0.0
    details = []
    for part in big:
        reduced = partial_trace(rho, part)
        bips = bipartitions(len(part))
        if method == "lapack":
            ens = _log_negativities_batch(reduced, bips)
        else:
            ens = np.array([log_negativity(reduced, b, method) for b in bips])
        if np.any(ens <= 0):
            gmean = 0.0
        else:
            gmean = float(np.exp(np.mean(np.log(ens))))
        details.append((part, ens, gmean))
        log_total = -np.inf if gmean == 0.0 else log_total + len(part) / norm * math.log(gmean)
    value = 0.0 if log_total == -np.inf else float(math.exp(log_total))
    return PartitionNegativity(value, False, details)


def partition_log_negativity(rho: np.ndarray, partition: Partition, method: str = "lapack") -> float:
    """Weighted geometric mean of per-part geometric-mean log-negativities.

    Returns 0.0 for all-singleton partitions (see ``details(...).trivial``).
    """
    return partition_log_negativity_details(rho, partition, method).value
