import numpy as np


def random_density_matrix(n, rng, rank=None):
    """Random mixed state from a Ginibre matrix of the given rank."""
    d = 2**n
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure_state(n, rng):
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return v / np.linalg.norm(v)


def kron_all(mats):
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


# acceptance bookkeeping: criterion number -> list of (passed, detail)
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}
CRITERIA = {
    1: "witness identities",
    2: "decomposition equivalence",
    3: "depolarization threshold",
    4: "partition classification",
    5: "certification accuracy",
    6: "PPT-fraction ordering",
    7: "depolarized GHZ/W certification",
    8: "purity estimation",
    9: "statistical oracles",
    10: "numerical invariant suite",
}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    print(f"criterion {criterion} ({CRITERIA[criterion]}): {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)
