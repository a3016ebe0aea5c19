"""Preparation circuits and a small noisy density-matrix simulator.

Gates act on density matrices by unitary conjugation; with noise enabled every
gate is followed by a depolarizing channel on exactly the qubits it touched.
Measurement in rotated local bases is sampled from the Born distribution.

Text format (one gate per line, ``#`` starts a comment)::

    # n_qubits=3 layout=star n_qft=0
    H 0
    CNOT 0 1
    CF 1 2 0.6154797086703873
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .qcore import Partition, basis_state, n_qubits_of, projector

MAX_QUBITS = 8

# name -> (number of qubits, number of angles)
GATE_ARITY = {
    "H": (1, 0),
    "X": (1, 0),
    "Z": (1, 0),
    "RY": (1, 1),
    "U3": (1, 3),
    "CNOT": (2, 0),
    "CF": (2, 1),
    "CP": (2, 1),
    "SWAP": (2, 0),
}

_I2 = np.eye(2, dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def u3(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=complex,
    )


def f_gate(theta: float) -> np.ndarray:
    """F(theta) = Ry(theta) Z Ry(-theta)."""
    return ry(theta) @ _Z @ ry(-theta)


def _controlled(u: np.ndarray) -> np.ndarray:
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = u
    return m


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(t) for t in self.params))
        if kind not in GATE_ARITY:
            raise ValueError(f"unknown gate {kind!r}")
        nq, npar = GATE_ARITY[kind]
        if len(self.qubits) != nq or len(self.params) != npar:
            raise ValueError(f"{kind} takes {nq} qubit(s) and {npar} angle(s)")
        if len(set(self.qubits)) != nq or min(self.qubits) < 0:
            raise ValueError(f"bad qubit indices {self.qubits} for {kind}")

    def matrix(self) -> np.ndarray:
        """Unitary on ``self.qubits`` (first listed qubit is most significant)."""
        k = self.kind
        if k == "H":
            return _H
        if k == "X":
            return _X
        if k == "Z":
            return _Z
        if k == "RY":
            return ry(self.params[0])
        if k == "U3":
            return u3(*self.params)
        if k == "CNOT":
            return _controlled(_X)
        if k == "CF":
            return _controlled(f_gate(self.params[0]))
        if k == "CP":
            return np.diag([1, 1, 1, np.exp(1j * self.params[0])])
        if k == "SWAP":
            return np.eye(4, dtype=complex)[[0, 2, 1, 3]]
        raise AssertionError(k)

    def inverse(self) -> "Gate":
        if self.kind in ("H", "X", "Z", "CNOT", "SWAP", "CF"):
            return self
        if self.kind in ("RY", "CP"):
            return Gate(self.kind, self.qubits, (-self.params[0],))
        theta, phi, lam = self.params
        return Gate("U3", self.qubits, (-theta, -lam, -phi))

    def to_line(self) -> str:
        return " ".join([self.kind, *map(str, self.qubits), *map(repr, self.params)])


@dataclass
class CircuitSpec:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    layout_tag: str = "custom"
    n_qft: int = 0

    def __post_init__(self):
        for g in self.gates:
            if max(g.qubits) >= self.n_qubits:
                raise ValueError(f"gate {g.to_line()} out of range for {self.n_qubits} qubits")

    def __add__(self, other: "CircuitSpec") -> "CircuitSpec":
        if other.n_qubits != self.n_qubits:
            raise ValueError("register sizes differ")
        tag = self.layout_tag if self.layout_tag == other.layout_tag else "custom"
        return CircuitSpec(self.n_qubits, self.gates + other.gates, tag, self.n_qft + other.n_qft)

    def inverse(self) -> "CircuitSpec":
        return CircuitSpec(self.n_qubits, [g.inverse() for g in reversed(self.gates)], self.layout_tag, self.n_qft)

    def to_text(self) -> str:
        lines = [f"# n_qubits={self.n_qubits} layout={self.layout_tag} n_qft={self.n_qft}"]
        lines += [g.to_line() for g in self.gates]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CircuitSpec":
        meta = {}
        gates = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        meta[key] = val
                continue
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, *rest = line.split()
            name = name.upper()
            if name not in GATE_ARITY:
                raise ValueError(f"line {lineno}: unknown gate {name!r}")
            nq, npar = GATE_ARITY[name]
            if len(rest) != nq + npar:
                raise ValueError(f"line {lineno}: {name} expects {nq} qubit(s) and {npar} angle(s)")
            try:
                gates.append(Gate(name, tuple(int(t) for t in rest[:nq]), tuple(float(t) for t in rest[nq:])))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
        if "n_qubits" in meta:
            n = int(meta["n_qubits"])
        else:
            n = 1 + max((max(g.qubits) for g in gates), default=0)
        return cls(n, gates, meta.get("layout", "custom"), int(meta.get("n_qft", 0)))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "CircuitSpec":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class NoiseParams:
    lambda_2q: float = 0.01
    lambda_1q: float = 0.001
    readout_flip: float = 0.01

    def __post_init__(self):
        for name in ("lambda_2q", "lambda_1q", "readout_flip"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


# ---------------------------------------------------------------------------
# Circuit builders
# ---------------------------------------------------------------------------


def _ghz_gates(qubits, layout: str) -> list[Gate]:
    gates = [Gate("H", (qubits[0],))]
    if layout == "star":
        gates += [Gate("CNOT", (qubits[0], q)) for q in qubits[1:]]
    elif layout == "ladder":
        gates += [Gate("CNOT", (a, b)) for a, b in zip(qubits[:-1], qubits[1:])]
    else:
        raise ValueError(f"unknown GHZ layout {layout!r}")
    return gates


def ghz_circuit(n: int, layout: str = "star") -> CircuitSpec:
    if n < 2:
        raise ValueError("GHZ circuit needs n >= 2")
    return CircuitSpec(n, _ghz_gates(list(range(n)), layout), layout)


def w_angles(n: int) -> np.ndarray:
    """theta_k = arccos(sqrt(k / (k + 1))) for k = 1..n-1."""
    k = np.arange(1, n)
    return np.arccos(np.sqrt(k / (k + 1)))


def _w_gates(qubits) -> list[Gate]:
    n = len(qubits)
    theta = w_angles(n)
    gates = [Gate("X", (qubits[0],))]
    # Cascade carries the not-yet-placed amplitude along the |1> branch; the
    # complementary angle pi/2 - theta_k keeps 1/sqrt(n) behind at each step.
    for j in range(n - 1):
        k = n - 1 - j
        gates.append(Gate("CF", (qubits[j], qubits[j + 1]), (math.pi / 2 - theta[k - 1],)))
    # |1..10..0> (m ones) -> single excitation on qubit m-1
    gates += [Gate("CNOT", (qubits[j + 1], qubits[j])) for j in range(n - 1)]
    return gates


def w_circuit(n: int) -> CircuitSpec:
    if n < 2:
        raise ValueError("W circuit needs n >= 2")
    return CircuitSpec(n, _w_gates(list(range(n))), "w")


def partitioned_circuit(partition: Partition, kind: str = "ghz", layout: str = "ladder") -> CircuitSpec:
    """Prepare GHZ_P or W_P; single-qubit parts get H (the |+> state)."""
    gates = []
    for part in partition.parts:
        if len(part) == 1:
            gates.append(Gate("H", part))
        elif kind == "ghz":
            gates += _ghz_gates(list(part), layout)
        elif kind == "w":
            gates += _w_gates(list(part))
        else:
            raise ValueError(f"unknown state kind {kind!r}")
    return CircuitSpec(partition.n_qubits, gates, layout if kind == "ghz" else "w")


def qft_gates(qubits) -> list[Gate]:
    """Textbook QFT: H and controlled phases, then the bit-reversal swaps."""
    qubits = list(qubits)
    m = len(qubits)
    gates = []
    for j in range(m):
        gates.append(Gate("H", (qubits[j],)))
        for k in range(j + 1, m):
            gates.append(Gate("CP", (qubits[k], qubits[j]), (math.pi / 2 ** (k - j),)))
    for i in range(m // 2):
        gates.append(Gate("SWAP", (qubits[i], qubits[m - 1 - i])))
    return gates


def qft_echo_circuit(partition: Partition, n_qft: int) -> CircuitSpec:
    """n_qft repetitions of QFT_P followed by its inverse; identity when noiseless."""
    if n_qft < 0:
        raise ValueError("n_qft must be >= 0")
    forward = [g for part in partition.parts for g in qft_gates(part)]
    backward = [g.inverse() for g in reversed(forward)]
    return CircuitSpec(partition.n_qubits, (forward + backward) * n_qft, "qft-echo", n_qft)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _apply_unitary(t: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    """Conjugate the (2,)*2n tensor ``t`` by ``u`` acting on ``qubits``."""
    k = len(qubits)
    ut = u.reshape((2,) * (2 * k))
    rows = list(qubits)
    cols = [n + q for q in qubits]
    # left multiply: contract u's input axes with the row axes
    t = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), rows))
    t = np.moveaxis(t, list(range(k)), rows)
    t = np.tensordot(ut.conj(), t, axes=(list(range(k, 2 * k)), cols))
    t = np.moveaxis(t, list(range(k)), cols)
    return t


def _depolarize_local(t: np.ndarray, qubits, lam: float, n: int) -> np.ndarray:
    if lam == 0.0:
        return t
    qs = set(qubits)
    rest = [q for q in range(n) if q not in qs]
    in_labels = [q for q in range(n)] + [q if q in qs else n + q for q in range(n)]
    reduced = np.einsum(t, in_labels, rest + [n + q for q in rest])
    ops = [reduced, rest + [n + q for q in rest]]
    for q in qubits:
        ops += [np.eye(2) / 2, [q, n + q]]
    mixed = np.einsum(*ops, list(range(2 * n)))
    return (1 - lam) * t + lam * mixed


def simulate(circuit: CircuitSpec, noise: NoiseParams | None = None, initial=None, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """Run ``circuit`` from |0..0> (or ``initial``) and return the density matrix."""
    n = circuit.n_qubits
    if n > max_qubits:
        raise MemoryError(f"{n} qubits exceeds the simulator cap of {max_qubits}")
    if initial is None:
        rho = projector(basis_state(n))
    else:
        initial = np.asarray(initial)
        rho = projector(initial) if initial.ndim == 1 else initial.astype(complex)
        if n_qubits_of(rho) != n:
            raise ValueError("initial state does not match the register size")
    t = rho.reshape((2,) * (2 * n))
    for g in circuit.gates:
        t = _apply_unitary(t, g.matrix(), g.qubits, n)
        if noise is not None:
            lam = noise.lambda_2q if len(g.qubits) == 2 else noise.lambda_1q
            t = _depolarize_local(t, g.qubits, lam, n)
    d = 2**n
    rho = t.reshape(d, d)
    return (rho + rho.conj().T) / 2


def simulate_statevector(circuit: CircuitSpec, initial=None) -> np.ndarray:
    n = circuit.n_qubits
    psi = basis_state(n) if initial is None else np.asarray(initial, dtype=complex)
    t = psi.reshape((2,) * n)
    for g in circuit.gates:
        k = len(g.qubits)
        ut = g.matrix().reshape((2,) * (2 * k))
        t = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), list(g.qubits)))
        t = np.moveaxis(t, list(range(k)), list(g.qubits))
    return t.reshape(-1)


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------


def rotated_probabilities(rho: np.ndarray, rotations) -> np.ndarray:
    """Diagonal of (x)R rho (x)R^dagger in the computational basis."""
    n = n_qubits_of(rho)
    if len(rotations) != n:
        raise ValueError(f"need {n} rotations, got {len(rotations)}")
    t = rho.reshape((2,) * (2 * n))
    for q, r in enumerate(rotations):
        t = _apply_unitary(t, np.asarray(r, dtype=complex), (q,), n)
    p = np.real(np.diagonal(t.reshape(2**n, 2**n))).copy()
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def apply_readout_flip(probs: np.ndarray, flip: float) -> np.ndarray:
    """Independent bit flips with probability ``flip`` on every qubit (last axis)."""
    if flip == 0.0:
        return probs
    n = int(round(math.log2(probs.shape[-1])))
    lead = probs.shape[:-1]
    t = probs.reshape(lead + (2,) * n)
    m = np.array([[1 - flip, flip], [flip, 1 - flip]])
    for q in range(n):
        ax = len(lead) + q
        t = np.moveaxis(np.tensordot(t, m, axes=([ax], [1])), -1, ax)
    return t.reshape(probs.shape)


def sample_counts(probs: np.ndarray, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts over outcome indices (works on stacked distributions)."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum(axis=-1, keepdims=True)
    return rng.multinomial(n_shots, probs)


def sample_shots(
    rho: np.ndarray,
    local_rotations,
    n_shots: int,
    rng: np.random.Generator,
    readout_flip: float = 0.0,
) -> dict[str, int]:
    """Measure every qubit after its local rotation; keys are bitstrings, qubit 0 first."""
    n = n_qubits_of(rho)
    probs = apply_readout_flip(rotated_probabilities(rho, local_rotations), readout_flip)
    counts = sample_counts(probs, n_shots, rng)
    return {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c}


def counts_to_array(counts: dict[str, int], n: int) -> np.ndarray:
    out = np.zeros(2**n, dtype=np.int64)
    for key, c in counts.items():
        out[int(key, 2)] = c
    return out


def rotation_to_z(bloch) -> np.ndarray:
    """Unitary R with R^dagger Z R = n . sigma for the unit vector ``bloch``."""
    x, y, z = bloch
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x)
    return ry(-theta) @ rz(-phi)
