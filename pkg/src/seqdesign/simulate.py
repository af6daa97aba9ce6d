"""Exact small-cluster evolution and effective-Hamiltonian extraction.

Two propagation paths are provided.

``toggling``
    Product of exact exponentials of the toggling-frame Hamiltonian H(f_k).
    Pulse windows use the rotating frame vector
    f(theta) = cos(theta) f_k + sin(theta) f_{k+1} with midpoint steps.
``lab``
    Lab-frame evolution under the native Hamiltonian, with pulse windows
    generated by H + Omega S^{x/y} (Omega = (pi/2) / tau_p), followed by
    removal of the net pulse rotation.  Needs the first frame to be +z.

For ideal pulses both are exact and agree to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .frames import Axis, CycleError, Pulse, PulseSequence, transition_rotations, _PULSE_FOR_IMAGE
from .magnus import first_order_hamiltonian, zeroth_order_hamiltonian
from .operators import (
    HamiltonianParams,
    build_hamiltonian,
    frame_hamiltonian,
    pauli_compose,
    pauli_decompose,
    pauli_labels,
    spin_op,
)

__all__ = [
    "BranchError",
    "EffectiveHamiltonian",
    "ScalingFit",
    "evolve_sequence",
    "extract_effective_hamiltonian",
    "effective_hamiltonian",
    "effective_error",
    "heisenberg_part",
    "error_scaling_fit",
    "scaling_sweep",
    "format_sweep",
    "parse_dump",
    "xxz_axis_fractions",
    "xxz_reweight",
    "pulse_schedule",
    "interaction_matrix",
    "SelectionCheck",
    "SelectionReport",
    "verify_selection_rules",
    "format_selection_report",
]

BRANCH_GUARD = 1e-6
DEFAULT_STEPS = 64


class BranchError(ValueError):
    """An eigenphase of U sits at the principal-branch cut."""


# --------------------------------------------------------------------------
# propagation


def pulse_schedule(seq: PulseSequence, pi_axis: str = "x"):
    """Events ``("free", tau, k)`` and ``("pulse", Pulse, k)`` of one cycle.

    ``k`` is the frame the event starts in.  Antiparallel transitions are two
    pulses about ``pi_axis``.  The first frame must be +z.
    """
    ax = seq.axes
    if ax[0] != Axis.PZ:
        raise CycleError("lab-frame evolution needs the first frame to be +z")
    n = len(ax)
    G = np.eye(3, dtype=int)
    ev = []
    for k in range(n):
        ev.append(("free", float(seq.taus[k]), k))
        b = ax[(k + 1) % n]
        r = transition_rotations(ax[k], b) if n > 1 else 0
        if r == 2:
            p = Pulse(pi_axis, 1)
            ev += [("pulse", p, k), ("pulse", p, k)]
            G = G @ p.matrix @ p.matrix
        elif r == 1:
            p = _PULSE_FOR_IMAGE[tuple(int(x) for x in G.T @ b.vector)]
            ev.append(("pulse", p, k))
            G = G @ p.matrix
    return ev


def _pulse_unitary(p: Pulse, n: int) -> np.ndarray:
    a = 0 if p.axis == "x" else 1
    X = sum(spin_op(a, i, n) for i in range(n))
    return sla.expm(-1j * (math.pi / 2) * p.sign * X)


def _expm_h(H: np.ndarray, t: float) -> np.ndarray:
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def _evolve_lab(seq, params, steps, pi_axis):
    n = params.n_spins
    H = build_hamiltonian(params)
    d = 2**n
    U = np.eye(d, dtype=complex)
    R = np.eye(d, dtype=complex)
    tp = seq.tau_p
    for kind, x, _ in pulse_schedule(seq, pi_axis):
        if kind == "free":
            if x:
                U = _expm_h(H, x) @ U
            continue
        P = _pulse_unitary(x, n)
        R = P @ R
        if tp > 0:
            a = 0 if x.axis == "x" else 1
            Hd = H + x.sign * (math.pi / 2 / tp) * sum(spin_op(a, i, n) for i in range(n))
            # time-independent within the window; the step count only splits the window
            Us = _expm_h(Hd, tp / steps)
            U = np.linalg.matrix_power(Us, steps) @ U
        else:
            U = P @ U
    return R.conj().T @ U


def _evolve_toggling(seq, params, steps):
    n = params.n_spins
    d = 2**n
    U = np.eye(d, dtype=complex)
    ax = seq.axes
    N = len(ax)
    tp = seq.tau_p
    for k in range(N):
        f = ax[k].vector.astype(float)
        if seq.taus[k]:
            U = _expm_h(frame_hamiltonian(f, params), float(seq.taus[k])) @ U
        r = transition_rotations(ax[k], ax[(k + 1) % N]) if N > 1 else 0
        if r == 0 or tp == 0:
            continue
        if r == 2:
            raise CycleError("finite antiparallel transitions need explicit pulse frames (insert_pulse_frames)")
        g = ax[(k + 1) % N].vector.astype(float)
        dt = tp / steps
        for j in range(steps):
            th = (j + 0.5) / steps * (math.pi / 2)
            U = _expm_h(frame_hamiltonian(math.cos(th) * f + math.sin(th) * g, params), dt) @ U
    return U


def evolve_sequence(
    seq: PulseSequence,
    params: HamiltonianParams,
    finite_pulses: bool = True,
    steps: int = DEFAULT_STEPS,
    method: str = "lab",
    pi_axis: str = "x",
) -> np.ndarray:
    """Toggling-frame propagator over one cycle.

    Parameters
    ----------
    finite_pulses : bool
        When False, pulses are instantaneous and ``tau_p`` is ignored.
    steps : int
        Sub-steps per pulse window.
    method : {"lab", "toggling"}
        Propagation path (see the module notes).
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if not finite_pulses and seq.tau_p:
        seq = seq.with_tau_p(0.0)
    if method == "lab":
        return _evolve_lab(seq, params, steps, pi_axis)
    if method == "toggling":
        return _evolve_toggling(seq, params, steps)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# effective Hamiltonians


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Pauli-string coefficients of a traceless Hermitian operator.

    ``H = sum_P coeffs[P] P`` with P a tensor product of I, X, Y, Z (Pauli
    matrices, so X = 2 S^x).  The identity component is always 0.
    """

    coeffs: dict
    T: float
    n_spins: int
    matrix: np.ndarray = field(repr=False, compare=False, default=None)

    def __getitem__(self, label: str) -> float:
        return self.coeffs.get(label, 0.0)

    def to_matrix(self) -> np.ndarray:
        return pauli_compose(self.coeffs, self.n_spins)

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return math.sqrt(math.fsum(c * c for c in self.coeffs.values()))

    def subtract(self, other) -> "EffectiveHamiltonian":
        oc = other.coeffs if isinstance(other, EffectiveHamiltonian) else other
        keys = sorted(set(self.coeffs) | set(oc))
        c = {k: self.coeffs.get(k, 0.0) - oc.get(k, 0.0) for k in keys}
        return EffectiveHamiltonian(c, self.T, self.n_spins)

    def dominant(self, k: int = 4) -> list[tuple[str, float]]:
        return sorted(self.coeffs.items(), key=lambda kv: (-abs(kv[1]), kv[0]))[:k]

    def dump(self, threshold: float = 0.0) -> str:
        """``label coefficient`` lines, preceded by a period comment."""
        lines = [f"# T = {self.T!r}"]
        for lab in sorted(self.coeffs):
            c = self.coeffs[lab]
            if abs(c) > threshold:
                lines.append(f"{lab} {c!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_operator(cls, H: np.ndarray, T: float) -> "EffectiveHamiltonian":
        n = int(round(math.log2(H.shape[0])))
        return cls(pauli_decompose(H), float(T), n, H)


def parse_dump(text: str) -> EffectiveHamiltonian:
    T = float("nan")
    coeffs = {}
    n = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("T ="):
                T = float(body.split("=", 1)[1])
            continue
        lab, val = line.split()
        if n is None:
            n = len(lab)
        elif len(lab) != n or set(lab) - set("IXYZ"):
            raise ValueError(f"bad operator label {lab!r}")
        coeffs[lab] = float(val)
    if n is None:
        raise ValueError("dump holds no coefficients")
    full = {lab: coeffs.get(lab, 0.0) for lab in pauli_labels(n) if set(lab) != {"I"}}
    return EffectiveHamiltonian(full, T, n)


def extract_effective_hamiltonian(U: np.ndarray, T: float, target=None) -> EffectiveHamiltonian:
    """H_eff = (i/T) log U on the principal branch, traceless.

    The global phase is removed before the branch check: eigenphases are
    measured relative to the phase of tr U and must stay inside
    (-pi + 1e-6, pi - 1e-6).

    Parameters
    ----------
    target : None, EffectiveHamiltonian, dict or matrix
        Subtracted from the result when given.
    """
    U = np.asarray(U, dtype=complex)
    if T <= 0:
        raise ValueError("period must be positive")
    Tm, Z = sla.schur(U, output="complex")
    lam = np.diag(Tm)
    tr = lam.sum()
    ref = np.angle(tr) if abs(tr) > 1e-8 * len(lam) else np.angle(lam[0])
    ph = np.angle(lam * np.exp(-1j * ref))
    if np.any(np.abs(ph) > math.pi - BRANCH_GUARD):
        raise BranchError(
            f"eigenphase {ph[np.argmax(np.abs(ph))]:.6g} is at the branch cut; shorten the period"
        )
    ph = ph - ph.mean()
    H = -(Z * (ph / T)) @ Z.conj().T
    H = 0.5 * (H + H.conj().T)
    eff = EffectiveHamiltonian.from_operator(H, T)
    if target is None:
        return eff
    if isinstance(target, np.ndarray):
        target = pauli_decompose(target)
    return eff.subtract(target)


def heisenberg_part(eff: EffectiveHamiltonian) -> dict:
    """Isotropic two-body part: per spin pair the mean of XX, YY, ZZ on all three."""
    n = eff.n_spins
    out = {}
    for i in range(n):
        for j in range(i + 1, n):
            labs = []
            for a in "XYZ":
                lab = ["I"] * n
                lab[i] = lab[j] = a
                labs.append("".join(lab))
            m = sum(eff[lab] for lab in labs) / 3
            for lab in labs:
                out[lab] = m
    return out


def effective_hamiltonian(
    seq: PulseSequence, params: HamiltonianParams, target: str | None = None, exact_boundary: bool = True, **kw
) -> EffectiveHamiltonian:
    """Evolve one cycle and extract H_eff.

    ``target`` is ``None``, ``"zeroth"`` (zeroth-order average Hamiltonian),
    ``"first"`` (zeroth plus first order, with the given boundary
    convention) or ``"heisenberg"`` (the isotropic part of H_eff itself).
    Remaining keywords go to :func:`evolve_sequence`.
    """
    s = seq if kw.get("finite_pulses", True) else seq.with_tau_p(0.0)
    U = evolve_sequence(s, params, **kw)
    eff = extract_effective_hamiltonian(U, s.T)
    if target is None:
        return eff
    if target == "zeroth":
        return eff.subtract(pauli_decompose(zeroth_order_hamiltonian(s, params)))
    if target == "first":
        H01 = zeroth_order_hamiltonian(s, params) + first_order_hamiltonian(s, params, exact_boundary=exact_boundary)
        return eff.subtract(pauli_decompose(H01))
    if target == "heisenberg":
        return eff.subtract(heisenberg_part(eff))
    raise ValueError(f"unknown target {target!r}")


def effective_error(seq: PulseSequence, params: HamiltonianParams, target: str = "zeroth", **kw) -> float:
    """Norm of the error coefficients of H_eff with the target subtracted."""
    return effective_hamiltonian(seq, params, target, **kw).norm()


# --------------------------------------------------------------------------
# scaling fits


@dataclass(frozen=True)
class ScalingFit:
    """|c| ~ coefficient * x**exponent fitted on a log-log scale."""

    component: str
    parameter: str
    values: tuple[float, ...]
    magnitudes: tuple[float, ...]
    exponent: float
    coefficient: float
    residual: float
    degenerate: bool


def _with_parameter(params: HamiltonianParams, parameter: str, value: float) -> HamiltonianParams:
    if parameter == "h":
        h = np.array(params.h)
        scale = np.max(np.abs(h))
        base = h / scale if scale > 0 else np.eye(len(h))[0]
        return params.replace(h=tuple(value * base))
    if parameter == "J":
        J = params.Jmat
        scale = np.max(np.abs(J))
        if scale == 0:
            return params.replace(J=value)
        return params.replace(J=value * J / scale)
    raise ValueError(f"sweep parameter must be 'h' or 'J', got {parameter!r}")


def scaling_sweep(seq, params, parameter: str, values, component: str, target: str | None = "heisenberg", **kw):
    """|coefficient of ``component``| of H_eff at each swept value."""
    out = []
    for v in values:
        eff = effective_hamiltonian(seq, _with_parameter(params, parameter, float(v)), target, **kw)
        if component not in eff.coeffs:
            raise ValueError(f"unknown component {component!r}")
        out.append(abs(eff[component]))
    return out


def error_scaling_fit(
    seq, params, parameter: str, values, component: str, target: str | None = "heisenberg", floor: float | None = None, **kw
) -> ScalingFit:
    """Fit the power law of one H_eff component against h or J.

    The fit is flagged degenerate (exponent nan) when any magnitude is below
    ``floor``, which defaults to 1e-9 times the largest energy scale of the
    sweep (roundoff of the matrix logarithm).
    """
    values = np.asarray([float(v) for v in values])
    if len(values) < 2 or np.any(values <= 0):
        raise ValueError("need at least two positive sweep values")
    mags = np.array(scaling_sweep(seq, params, parameter, values, component, target, **kw))
    if floor is None:
        scale = max(np.max(np.abs(params.h)), np.max(np.abs(params.Jmat)), np.max(values))
        floor = 1e-9 * scale
    if np.any(mags <= floor):
        return ScalingFit(component, parameter, tuple(values), tuple(mags), float("nan"), float("nan"), float("nan"), True)
    x, y = np.log(values), np.log(mags)
    (slope, icpt), resid, *_ = np.polyfit(x, y, 1, full=True)
    r = float(np.sqrt(resid[0] / len(x))) if len(resid) else 0.0
    return ScalingFit(component, parameter, tuple(values), tuple(mags), float(slope), float(np.exp(icpt)), r, False)


def format_sweep(fit: ScalingFit) -> str:
    lines = [
        f"# component={fit.component} parameter={fit.parameter} exponent={fit.exponent!r} "
        f"coefficient={fit.coefficient!r} residual={fit.residual!r} degenerate={int(fit.degenerate)}",
        f"{fit.parameter} magnitude",
    ]
    lines += [f"{v!r} {m!r}" for v, m in zip(fit.values, fit.magnitudes)]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# XXZ engineering


def xxz_axis_fractions(lam: float) -> np.ndarray:
    """Time fractions per axis turning dipolar couplings into the XXZ anisotropy.

    A dipolar frame average gives sum_a (1 - 3 p_a) S^a S^a.  With
    p_x = p_y = (1 - lam/3)/3 and p_z = (1 + 2 lam/3)/3 this equals the XXZ
    interaction (1+lam)/3 (S^xS^x + S^yS^y) + (1-2 lam)/3 S^zS^z minus its
    isotropic part S.S/3, which no reweighting can produce.
    """
    p = np.array([(1 - lam / 3) / 3, (1 - lam / 3) / 3, (1 + 2 * lam / 3) / 3])
    if np.any(p < 0):
        raise ValueError(f"lam={lam} needs a negative time fraction; valid range is [-1.5, 3]")
    return p


def xxz_reweight(seq: PulseSequence, lam: float) -> PulseSequence:
    """Rescale free durations per axis to the XXZ fractions, keeping sum(tau)."""
    p = xxz_axis_fractions(lam)
    taus = np.array(seq.taus, dtype=float)
    idx = np.array([a.index for a in seq.axes])
    total = taus.sum()
    W = np.array([taus[idx == a].sum() for a in range(3)])
    if np.any((W == 0) & (p > 0)):
        raise ValueError("every axis with a positive fraction needs free evolution time")
    new = np.array([taus[k] * p[idx[k]] * total / W[idx[k]] if W[idx[k]] else 0.0 for k in range(len(taus))])
    return PulseSequence.build(list(seq.axes), new, seq.tau_p, list(seq.frames.pulse_frames), allow_repeats=True)


# --------------------------------------------------------------------------
# two-qubit commutator selection rules
#
# A 4x4 real matrix A stands for H(A) = sum_{mu,nu} A[mu, nu] sigma_mu (x) sigma_nu
# with sigma_0 the identity.  Row 0 / column 0 hold the disorder on the
# second / first spin, the lower 3x3 block the interaction.

_SIG = [np.eye(2, dtype=complex)] + [np.array(m, dtype=complex) for m in ([[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]])]
_BASIS = np.array([[np.kron(_SIG[m], _SIG[n]) for n in range(4)] for m in range(4)])
_EPS = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS[_i, _j, _k], _EPS[_i, _k, _j] = 1.0, -1.0


def interaction_matrix(A: np.ndarray) -> np.ndarray:
    """Operator H(A) of a 4x4 coefficient matrix."""
    return np.einsum("mn,mnij->ij", np.asarray(A, dtype=complex), _BASIS)


def _A_dis(F, sign):
    A = np.zeros((4, 4), dtype=complex)
    A[0, 1:] = sign * np.asarray(F)
    A[1:, 0] = F
    return A


def _A_block(B):
    A = np.zeros((4, 4), dtype=complex)
    A[1:, 1:] = B
    return A


def _A_H():
    return _A_block(np.eye(3))


def _A_I(F, G=None):
    G = F if G is None else G
    return _A_block((np.outer(F, G) + np.outer(G, F)) / 2)


def _A_A(F):
    return _A_block(np.einsum("ijk,k->ij", _EPS, F))


def _comm(A, B):
    X, Y = interaction_matrix(A), interaction_matrix(B)
    return X @ Y - Y @ X


@dataclass(frozen=True)
class SelectionCheck:
    name: str
    max_error: float
    trials: int
    passed: bool


@dataclass(frozen=True)
class SelectionReport:
    checks: tuple[SelectionCheck, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _identities():
    """(name, lhs(F, G), rhs(F, G)) for each bracket."""
    H = interaction_matrix
    out = []
    for a in (1, -1):
        for b in (1, -1):
            sa, sb = "+-"[a < 0], "+-"[b < 0]
            out.append(
                (f"[A{sa}(F),A{sb}(G)] = 2i A{'+-'[a * b < 0]}(FxG)",
                 lambda F, G, a=a, b=b: _comm(_A_dis(F, a), _A_dis(G, b)),
                 lambda F, G, a=a, b=b: H(2j * _A_dis(np.cross(F, G), a * b)))
            )
    out += [
        ("[A+(F),A_H] = 0", lambda F, G: _comm(_A_dis(F, 1), _A_H()), lambda F, G: 0),
        ("[A+(F),A_I(G)] = 4i A_I(G,FxG)", lambda F, G: _comm(_A_dis(F, 1), _A_I(G)),
         lambda F, G: H(4j * _A_I(G, np.cross(F, G)))),
        ("[A-(F),A_H] = -4i A_A(F)", lambda F, G: _comm(_A_dis(F, -1), _A_H()), lambda F, G: H(-4j * _A_A(F))),
        ("[A-(F),A_I(G)] = 2i((F.G) A_A(G) - A_A(F))", lambda F, G: _comm(_A_dis(F, -1), _A_I(G)),
         lambda F, G: H(2j * (np.dot(F, G) * _A_A(G) - _A_A(F)))),
        ("[A_H,A_H] = 0", lambda F, G: _comm(_A_H(), _A_H()), lambda F, G: 0),
        ("[A_H,A_I(G)] = 0", lambda F, G: _comm(_A_H(), _A_I(G)), lambda F, G: 0),
        ("[A_I(F),A_I(G)] = 2i (F.G) A+(FxG)", lambda F, G: _comm(_A_I(F), _A_I(G)),
         lambda F, G: H(2j * np.dot(F, G) * _A_dis(np.cross(F, G), 1))),
    ]
    return out


def verify_selection_rules(trials: int = 1000, seed: int = 0, tolerance: float = 1e-12) -> SelectionReport:
    """Check the two-qubit bracket identities on random unit frame vectors.

    Each identity is evaluated on ``trials`` draws of (F, G).  The final check
    confirms that [A_I(F), A_I(G)] vanishes for every pair of orthogonal or
    parallel axis-aligned frames, the only ones reachable with pi/2 and pi
    pulses.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    FG = rng.normal(size=(trials, 2, 3))
    FG /= np.linalg.norm(FG, axis=2, keepdims=True)
    checks = []
    for name, lhs, rhs in _identities():
        err = 0.0
        for F, G in FG:
            err = max(err, float(np.abs(lhs(F, G) - rhs(F, G)).max()))
        checks.append(SelectionCheck(name, err, trials, err <= tolerance))
    err = 0.0
    axes = [a.vector.astype(float) for a in Axis]
    for F in axes:
        for G in axes:
            err = max(err, float(np.abs(_comm(_A_I(F), _A_I(G))).max()))
    checks.append(SelectionCheck("[A_I(F),A_I(G)] = 0 for axis-aligned F, G", err, len(axes) ** 2, err <= tolerance))
    return SelectionReport(tuple(checks), tolerance)


def format_selection_report(rep: SelectionReport) -> str:
    lines = [f"{'PASS' if c.passed else 'FAIL'} max_error={c.max_error:.3e} trials={c.trials} {c.name}" for c in rep.checks]
    return "\n".join(lines) + "\n"
