"""Spin-1/2 operators, Pauli decompositions and model Hamiltonians."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .frames import TermKind

__all__ = [
    "PAULI",
    "spin_op",
    "pauli_string",
    "pauli_labels",
    "pauli_decompose",
    "pauli_compose",
    "HamiltonianParams",
    "kind_operator",
    "frame_hamiltonian",
    "build_hamiltonian",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@lru_cache(maxsize=None)
def _spin_op_cached(axis: int, site: int, n: int) -> np.ndarray:
    mats = [PAULI["I"]] * n
    mats[site] = 0.5 * PAULI["XYZ"[axis]]
    m = _kron_all(mats)
    m.setflags(write=False)
    return m


def spin_op(axis: int, site: int, n: int) -> np.ndarray:
    """S^axis on ``site`` of an ``n``-spin register (S = sigma / 2)."""
    return _spin_op_cached(int(axis), int(site), int(n))


@lru_cache(maxsize=None)
def pauli_string(label: str) -> np.ndarray:
    m = _kron_all([PAULI[c] for c in label])
    m.setflags(write=False)
    return m


def pauli_labels(n: int) -> list[str]:
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n)]


def pauli_decompose(H: np.ndarray, drop_identity: bool = True) -> dict[str, float]:
    """Real coefficients c_P with H = sum_P c_P P over Pauli strings P."""
    d = H.shape[0]
    n = int(round(np.log2(d)))
    out = {}
    for lab in pauli_labels(n):
        if drop_identity and set(lab) == {"I"}:
            continue
        out[lab] = float(np.real(np.trace(pauli_string(lab) @ H)) / d)
    return out


def pauli_compose(coeffs: dict[str, float], n: int) -> np.ndarray:
    H = np.zeros((2**n, 2**n), dtype=complex)
    for lab, c in coeffs.items():
        H += c * pauli_string(lab)
    return H


@dataclass(frozen=True)
class HamiltonianParams:
    """Secular two-body Hamiltonian of a small spin cluster.

    ``model="dipolar"`` is sum_i h_i S^z_i + sum_{i<j} J_ij (S_i.S_j - 3 S^z_i S^z_j).
    ``model="xxz"`` replaces the interaction with
    J_ij [(1+lam)/3 (S^xS^x + S^yS^y) + (1-2 lam)/3 S^zS^z].

    Parameters
    ----------
    h : sequence of float
        On-site fields in angular frequency, one per spin.
    J : float or (n, n) array
        Couplings.  A scalar couples every pair with the same strength.
    """

    h: tuple
    J: object = 0.0
    model: str = "dipolar"
    lam: float = 0.0
    Jmat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        object.__setattr__(self, "h", h)
        n = len(h)
        if n < 1:
            raise ValueError("at least one spin is required")
        if np.ndim(self.J) == 0:
            Jm = float(self.J) * (np.ones((n, n)) - np.eye(n))
        else:
            Jm = np.array(self.J, dtype=float)
            if Jm.shape != (n, n):
                raise ValueError(f"J must be {n}x{n}")
            if not np.allclose(Jm, Jm.T) or np.any(np.diag(Jm) != 0):
                raise ValueError("J must be symmetric with zero diagonal")
        if self.model not in ("dipolar", "xxz"):
            raise ValueError(f"unknown model {self.model!r}")
        Jm.setflags(write=False)
        object.__setattr__(self, "Jmat", Jm)

    @property
    def n_spins(self) -> int:
        return len(self.h)

    @property
    def weights(self) -> tuple[float, float]:
        """(Heisenberg weight, Ising weight) of the interaction in frame +z."""
        if self.model == "dipolar":
            return 1.0, -3.0
        return (1.0 + self.lam) / 3.0, -self.lam

    def replace(self, **kw) -> "HamiltonianParams":
        d = dict(h=self.h, J=self.J, model=self.model, lam=self.lam)
        d.update(kw)
        return HamiltonianParams(**d)


def _pair_sum(params: HamiltonianParams, a: int, b: int, n: int) -> np.ndarray:
    """sum_{i<j} J_ij (S^a_i S^b_j + S^b_i S^a_j) / (2 if a == b else 1)."""
    d = 2**n
    out = np.zeros((d, d), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            Jij = params.Jmat[i, j]
            if Jij == 0:
                continue
            term = spin_op(a, i, n) @ spin_op(b, j, n) + spin_op(b, i, n) @ spin_op(a, j, n)
            out += Jij * (term / 2 if a == b else term)
    return out


def kind_operator(kind: TermKind, params: HamiltonianParams, n: int | None = None) -> np.ndarray:
    """Operator multiplying the coefficient trajectory of ``kind``.

    The toggling-frame Hamiltonian is sum over kinds of c_kind(t) times this
    operator.  Ising and cross operators carry the model's Ising weight.
    """
    n = params.n_spins if n is None else n
    gh, gi = params.weights
    if kind.family == "D":
        mu = kind.axes[0]
        return sum(params.h[i] * spin_op(mu, i, n) for i in range(n))
    if kind.family == "H":
        return gh * sum(_pair_sum(params, a, a, n) for a in range(3))
    if kind.family == "I":
        mu = kind.axes[0]
        return gi * _pair_sum(params, mu, mu, n)
    nu, rho = kind.axes
    return gi * _pair_sum(params, nu, rho, n)


def frame_hamiltonian(f: np.ndarray, params: HamiltonianParams) -> np.ndarray:
    """Toggling-frame Hamiltonian when the quantization axis points along ``f``.

    H(f) = sum_i h_i f.S_i + sum_{i<j} J_ij [g_H S_i.S_j + g_I (f.S_i)(f.S_j)]
    """
    n = params.n_spins
    gh, gi = params.weights
    f = np.asarray(f, dtype=float)
    d = 2**n
    fS = [sum(f[a] * spin_op(a, i, n) for a in range(3)) for i in range(n)]
    H = np.zeros((d, d), dtype=complex)
    for i in range(n):
        H += params.h[i] * fS[i]
    for i in range(n):
        for j in range(i + 1, n):
            Jij = params.Jmat[i, j]
            if Jij == 0:
                continue
            SS = sum(spin_op(a, i, n) @ spin_op(a, j, n) for a in range(3))
            H += Jij * (gh * SS + gi * fS[i] @ fS[j])
    return H


def build_hamiltonian(params: HamiltonianParams, n_spins: int | None = None) -> np.ndarray:
    """Native (lab-frame, quantization along +z) Hamiltonian matrix."""
    if n_spins is not None and n_spins != params.n_spins:
        raise ValueError(f"parameters describe {params.n_spins} spins, not {n_spins}")
    return frame_hamiltonian(np.array([0.0, 0.0, 1.0]), params)
