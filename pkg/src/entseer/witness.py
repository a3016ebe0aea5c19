"""Fidelity-based GHZ and W entanglement witnesses.

Each witness is written as ``constant * I + sum_j c_j (x)_i (a_ij I + b_ij n_ij . sigma)``
where every product term only needs one local measurement setting (qubit i
measured along the Bloch vector ``n_ij``).  Terms sharing a setting are
estimated from the same shots.  Every decomposition is checked against the
dense witness matrix when it is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .circuits import apply_readout_flip, rotated_probabilities, rotation_to_z, sample_counts
from .qcore import ghz_state, n_qubits_of, w_state

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}

SINGULAR_TOL = 1e-10


class DecompositionError(RuntimeError):
    pass


def ghz_witness_matrix(n: int) -> np.ndarray:
    psi = ghz_state(n)
    return 0.5 * np.eye(2**n) - np.outer(psi, psi.conj())


def w_witness_matrix(n: int) -> np.ndarray:
    psi = w_state(n)
    return (n - 1) / n * np.eye(2**n) - np.outer(psi, psi.conj())


def ghz_witness_exact(rho: np.ndarray) -> float:
    psi = ghz_state(n_qubits_of(rho))
    return float(0.5 * np.trace(rho).real - np.real(psi.conj() @ rho @ psi))


def w_witness_exact(rho: np.ndarray) -> float:
    n = n_qubits_of(rho)
    psi = w_state(n)
    return float((n - 1) / n * np.trace(rho).real - np.real(psi.conj() @ rho @ psi))


@dataclass
class ProductTerm:
    """``coef * (x)_i (offset_i I + scale_i n_i . sigma)``."""

    coef: float
    offset: np.ndarray
    scale: np.ndarray


@dataclass
class LocalSetting:
    bloch: np.ndarray  # (n, 3) unit vectors
    terms: list[ProductTerm] = field(default_factory=list)
    weight: int = 1

    def key(self):
        return tuple(np.round(self.bloch, 12).ravel())

    def outcome_values(self) -> np.ndarray:
        """Value of the combined operator for every outcome index (qubit 0 = MSB)."""
        n = self.bloch.shape[0]
        idx = np.arange(2**n)
        bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
        spins = 1 - 2 * bits  # bit 0 -> eigenvalue +1
        total = np.zeros(2**n)
        for t in self.terms:
            total += t.coef * np.prod(t.offset[None, :] + t.scale[None, :] * spins, axis=1)
        return total

    def operator(self) -> np.ndarray:
        n = self.bloch.shape[0]
        sig = [
            v[0] * _PAULI["X"] + v[1] * _PAULI["Y"] + v[2] * _PAULI["Z"] for v in self.bloch
        ]
        out = np.zeros((2**n, 2**n), dtype=complex)
        for t in self.terms:
            factors = [t.offset[i] * _PAULI["I"] + t.scale[i] * sig[i] for i in range(n)]
            out += t.coef * reduce(np.kron, factors)
        return out


@dataclass
class WitnessDecomposition:
    target: str
    n: int
    constant: float
    settings: list[LocalSetting]
    auxiliary: dict = field(default_factory=dict)

    @property
    def n_settings(self) -> int:
        return len(self.settings)

    def operator(self) -> np.ndarray:
        out = self.constant * np.eye(2**self.n, dtype=complex)
        for s in self.settings:
            out += s.operator()
        return out

    def expectation(self, rho: np.ndarray) -> float:
        """Exact expectation assembled from per-setting Born probabilities."""
        val = self.constant * float(np.trace(rho).real)
        for s in self.settings:
            probs = rotated_probabilities(rho, [rotation_to_z(v) for v in s.bloch])
            val += float(probs @ s.outcome_values())
        return val

    def bounds(self) -> tuple[float, float]:
        """Range of values a single-shot-per-setting estimate can take."""
        lo = hi = self.constant
        for s in self.settings:
            v = s.outcome_values()
            lo += v.min()
            hi += v.max()
        return lo, hi


class _Builder:
    def __init__(self, n):
        self.n = n
        self._settings: dict[tuple, LocalSetting] = {}

    def add(self, bloch, coef, offset, scale):
        bloch = np.asarray(bloch, dtype=float)
        if bloch.ndim == 1:
            bloch = np.tile(bloch, (self.n, 1))
        setting = LocalSetting(bloch)
        setting = self._settings.setdefault(setting.key(), setting)
        setting.terms.append(
            ProductTerm(float(coef), np.broadcast_to(np.asarray(offset, float), (self.n,)).copy(),
                        np.broadcast_to(np.asarray(scale, float), (self.n,)).copy())
        )

    def settings(self):
        return list(self._settings.values())


def _verify(decomp: WitnessDecomposition, target: np.ndarray, tol: float) -> float:
    return float(np.max(np.abs(decomp.operator() - target)))


def build_ghz_decomposition(n: int) -> WitnessDecomposition:
    """Z^(x)N plus the N equatorial settings M_k; N + 1 settings in total."""
    if n < 2:
        raise ValueError("GHZ witness needs n >= 2")
    b = _Builder(n)
    z = (0.0, 0.0, 1.0)
    # 1/2 I - |GHZ><GHZ|, with 2|GHZ><GHZ| = 2^-N[(I+Z)^N + (I-Z)^N] + (1/N) sum_k (-1)^k M_k
    b.add(z, -0.5 / 2**n, 1.0, 1.0)
    b.add(z, -0.5 / 2**n, 1.0, -1.0)
    for k in range(1, n + 1):
        phi = k * math.pi / n
        b.add((math.cos(phi), math.sin(phi), 0.0), -((-1) ** k) / (2 * n), 0.0, 1.0)
    decomp = WitnessDecomposition("GHZ", n, 0.5, b.settings())
    residual = _verify(decomp, ghz_witness_matrix(n), 1e-10)
    decomp.auxiliary["residual"] = residual
    if residual > 1e-10:
        raise DecompositionError(f"GHZ decomposition residual {residual:.3g}")
    return decomp


def _w_angles(n: int, family: str) -> np.ndarray:
    L = (n - 1) // 2
    k = np.arange(1, L + 1)
    if family == "shifted":
        return (math.pi / 2) * (k + 1) / (L + 1)
    return (math.pi / 2) * k / (L + 1)


def _solve_chi(n: int, alpha: np.ndarray):
    ks = [k for k in range(2, n) if k % 2 == 0]
    L = len(alpha)
    if L == 0:
        return np.zeros(0), math.inf
    a = np.array([[math.cos(al) ** k * math.sin(al) ** (n - k) for al in alpha] for k in ks])
    rhs = np.array([1.0 if k == 2 else 0.0 for k in ks])
    smin = float(np.linalg.svd(a, compute_uv=False).min())
    chi = np.linalg.lstsq(a, rhs, rcond=None)[0]
    return chi, smin


def _assemble_w(n, alpha, chi, gamma_rule):
    gamma0 = float(sum(c * math.sin(al) ** n for c, al in zip(chi, alpha)))
    gamma_raw = float(sum(c * math.cos(al) ** n for c, al in zip(chi, alpha)))
    if n == 2:
        # no chi terms; the single pair term XX + YY is carried by gamma_N
        gamma_raw -= 1.0
    needs_gamma = (n % 2 == 0) if gamma_rule == "even" else (n % 2 == 1)
    gamma_n = gamma_raw if needs_gamma else 0.0

    scale = -1.0 / (n * 2**n)
    b = _Builder(n)
    z = (0.0, 0.0, 1.0)
    for k in range(n):
        signs = np.ones(n)
        signs[k] = -1.0
        b.add(z, scale, 1.0, signs)
    b.add(z, scale * -4 * gamma0, 1.0, 1.0)
    if gamma_n != 0.0:
        b.add((1.0, 0.0, 0.0), scale * -2 * gamma_n, 0.0, 1.0)
        b.add((0.0, 1.0, 0.0), scale * -2 * gamma_n, 0.0, 1.0)
    for c, al in zip(chi, alpha):
        ca, sa = math.cos(al), math.sin(al)
        for axis in (0, 1):
            for sign, weight in ((1, 1.0), (-1, (-1) ** n)):
                vec = [0.0, 0.0, sign * sa]
                vec[axis] = ca
                # 2 chi_j Q_j(O), Q = [M+ + (-1)^N M-] / 2
                b.add(vec, scale * c * weight, sign * sa, 1.0)
    aux = {"alpha": np.asarray(alpha), "chi": np.asarray(chi), "gamma_0": gamma0, "gamma_N": gamma_n}
    return WitnessDecomposition("W", n, (n - 1) / n, b.settings(), aux)


def build_w_decomposition(n: int, tol: float = 1e-8) -> WitnessDecomposition:
    """Local decomposition of the W witness with 2N - 1 settings.

    Angle families and the gamma_N parity rule are tried in order; the first
    combination whose dense operator matches the witness within ``tol`` wins.
    """
    if n < 2:
        raise ValueError("W witness needs n >= 2")
    target = w_witness_matrix(n)
    tried = []
    for family in ("shifted", "uniform"):
        alpha = _w_angles(n, family)
        chi, smin = _solve_chi(n, alpha)
        if len(alpha) and smin < SINGULAR_TOL:
            tried.append(f"{family}: singular (smallest singular value {smin:.2g})")
            continue
        for rule in ("odd", "even"):
            decomp = _assemble_w(n, alpha, chi, rule)
            residual = _verify(decomp, target, tol)
            if residual < tol:
                decomp.auxiliary.update(angle_family=family, gamma_rule=rule, residual=residual)
                return decomp
            tried.append(f"{family}/{rule}: residual {residual:.3g}")
    raise DecompositionError(f"no W decomposition verified for n={n}: " + "; ".join(tried))


def build_decomposition(target: str, n: int) -> WitnessDecomposition:
    target = target.lower()
    if target == "ghz":
        return build_ghz_decomposition(n)
    if target == "w":
        return build_w_decomposition(n)
    raise ValueError(f"unknown witness target {target!r}")


def estimate_witness(
    decomp: WitnessDecomposition,
    rho: np.ndarray,
    shots_per_setting: int,
    rng: np.random.Generator,
    readout_flip: float = 0.0,
) -> tuple[float, float]:
    """Shot-based witness estimate and its binomial standard error."""
    if shots_per_setting < 1:
        raise ValueError("shots_per_setting must be >= 1")
    estimate = decomp.constant * float(np.trace(rho).real)
    var = 0.0
    for s, child in zip(decomp.settings, rng.spawn(len(decomp.settings))):
        probs = rotated_probabilities(rho, [rotation_to_z(v) for v in s.bloch])
        probs = apply_readout_flip(probs, readout_flip)
        counts = sample_counts(probs, shots_per_setting, child)
        values = s.outcome_values()
        mean = counts @ values / shots_per_setting
        estimate += mean
        var += (counts @ (values - mean) ** 2 / shots_per_setting) / shots_per_setting
    return float(estimate), math.sqrt(var)
