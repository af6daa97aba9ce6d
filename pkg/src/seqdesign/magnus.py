"""Magnus coefficient integrals over piecewise coefficient trajectories.

For operator families alpha, beta with coefficients c_alpha(t), c_beta(t) the
first-order Magnus term is

    H1 = -i/(2T) sum_{alpha>beta} [O_alpha, O_beta] * V_ab,
    V_ab = A_ab - A_ba,   A_ab = int_0^T dt1 c_alpha(t1) int_0^t1 dt2 c_beta(t2).

The closed form walks the common window boundaries of both trajectories and
keeps running integrals, so its cost is linear in the number of frames.
Inside every window both coefficients are a single shape (constant, sin, cos,
sin^2, cos^2 or sin cos of the rotation angle), and the within-window double
integral is an exact tabulated constant.  Grouped by frame blocks this is the
familiar decomposition into free-frame products, pulse-overlap corrections,
same-frame terms and cross (q) terms.

Two boundary conventions are provided.  The default unrolls the closing pulse:
the ramp that belongs to the first frame is placed before it and the ramp-down
of the last frame stays at the end, so every frame block is contiguous.  With
``exact_boundary=True`` the integral is taken over the literal cycle.  The two
agree whenever there is no closing pulse window (tau_p = 0, or the cycle
closes with a continuation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import (
    CoefficientTrajectory,
    PulseSequence,
    TermKind,
    all_kinds,
    coefficient_trajectory,
)

__all__ = [
    "TermPairIntegral",
    "TermTripleIntegral",
    "zeroth_integral",
    "ordered_integral",
    "first_order_integral",
    "second_order_disorder_integral",
    "brute_force_integral",
    "zeroth_order_hamiltonian",
    "first_order_hamiltonian",
    "pulse_cycle_cross_term",
    "concatenate",
    "pulse_cycle_decomposition",
]

_PI = math.pi

# mean of each shape over theta in [0, pi/2]
MEAN = {"const": 1.0, "sin": 2 / _PI, "cos": 2 / _PI, "sin2": 0.5, "cos2": 0.5, "sincos": 1 / _PI}

# KBAR[a][b] = (2/pi)^2 int_0^{pi/2} a(t) int_0^t b(u) du dt
_P2 = _PI**2
KBAR = {
    "const": {"const": 0.5, "sin": 2 * (_PI - 2) / _P2, "cos": 4 / _P2, "sin2": 0.25 - 1 / _P2, "cos2": 0.25 + 1 / _P2, "sincos": 1 / (2 * _PI)},
    "sin": {"const": 4 / _P2, "sin": 2 / _P2, "cos": 1 / _PI, "sin2": 4 / (3 * _P2), "cos2": 8 / (3 * _P2), "sincos": 4 / (3 * _P2)},
    "cos": {"const": 2 * (_PI - 2) / _P2, "sin": (4 - _PI) / _P2, "cos": 2 / _P2, "sin2": (_PI - 8 / 3) / _P2, "cos2": (_PI - 4 / 3) / _P2, "sincos": 2 / (3 * _P2)},
    "sin2": {"const": 0.25 + 1 / _P2, "sin": (_PI - 4 / 3) / _P2, "cos": 8 / (3 * _P2), "sin2": 0.125, "cos2": 0.125 + 1 / _P2, "sincos": 3 / (8 * _PI)},
    "cos2": {"const": 0.25 - 1 / _P2, "sin": (_PI - 8 / 3) / _P2, "cos": 4 / (3 * _P2), "sin2": 0.125 - 1 / _P2, "cos2": 0.125, "sincos": 1 / (8 * _PI)},
    "sincos": {"const": 1 / (2 * _PI), "sin": 2 / (3 * _P2), "cos": 4 / (3 * _P2), "sin2": 1 / (8 * _PI), "cos2": 3 / (8 * _PI), "sincos": 1 / (2 * _P2)},
}


@dataclass(frozen=True)
class TermPairIntegral:
    """First-order coefficient of a pair of operator families.

    ``value`` is A_ab - A_ba, the coefficient of -i[O_a, O_b]/(2T).
    ``ordered`` is the time-ordered integral A_ab itself.
    """

    kinds: tuple[TermKind, TermKind]
    value: float
    ordered: float
    exact_boundary: bool = False


@dataclass(frozen=True)
class TermTripleIntegral:
    """Second-order coefficient for [O_a, [O_b, O_c]]."""

    kinds: tuple[TermKind, TermKind, TermKind]
    value: float


def zeroth_integral(traj: CoefficientTrajectory) -> float:
    """int_0^T c(t) dt, exact."""
    return traj.integral()


def _aligned(a: CoefficientTrajectory, b: CoefficientTrajectory):
    """Yield (duration, seg_a, seg_b) over the common refinement of both trajectories."""
    if not math.isclose(a.period, b.period, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError(f"trajectories have different periods ({a.period} vs {b.period})")
    eps = 1e-12 * max(a.period, 1e-300)
    sa = [s for s in a.segments if s.duration > 0]
    sb = [s for s in b.segments if s.duration > 0]
    i = j = 0
    ra = sa[0].duration if sa else 0.0
    rb = sb[0].duration if sb else 0.0
    while i < len(sa) and j < len(sb):
        x, y = sa[i], sb[j]
        if abs(ra - rb) <= eps:
            d = rb if x.ramp and not y.ramp else ra
        else:
            d = min(ra, rb)
        for seg, rem in ((x, ra), (y, rb)):
            if seg.ramp and (abs(rem - seg.duration) > eps or abs(d - seg.duration) > eps):
                raise ValueError("pulse windows of the two trajectories do not line up")
        yield d, x, y
        ra -= d
        rb -= d
        if ra <= eps:
            i += 1
            ra = sa[i].duration if i < len(sa) else 0.0
        if rb <= eps:
            j += 1
            rb = sb[j].duration if j < len(sb) else 0.0


def _ordered_terms(a: CoefficientTrajectory, b: CoefficientTrajectory) -> list[float]:
    """Summands of A_ab: window integral times running integral, plus in-window constant."""
    terms = []
    cum_b = 0.0
    for d, x, y in _aligned(a, b):
        ia = x.amplitude * d * MEAN[x.shape]
        if ia != 0.0:
            terms.append(ia * cum_b)
            if y.amplitude != 0.0:
                terms.append(x.amplitude * y.amplitude * d * d * KBAR[x.shape][y.shape])
        cum_b += y.amplitude * d * MEAN[y.shape]
    return terms


def ordered_integral(a: CoefficientTrajectory, b: CoefficientTrajectory) -> float:
    """Time-ordered double integral A_ab = int c_a(t1) int_0^t1 c_b(t2)."""
    return math.fsum(_ordered_terms(a, b))


def _convention(traj: CoefficientTrajectory, exact_boundary: bool) -> CoefficientTrajectory:
    return traj if exact_boundary or traj.unrolled else traj.to_unrolled()


def first_order_integral(
    traj_a: CoefficientTrajectory, traj_b: CoefficientTrajectory, exact_boundary: bool = False
) -> TermPairIntegral:
    """Antisymmetrized first-order coefficient of two operator families.

    The running-sum evaluation above is O(number of windows) and exact; with
    ideal pulses it reduces to
    sum_k c_ak tau_k (C_b,<k + tau_k c_bk / 2) - C_a C_b / 2, doubled.

    Examples
    --------
    >>> from seqdesign.frames import PulseSequence, Disorder, coefficient_trajectory
    >>> seq = PulseSequence.build(["+z", "+x"], 1.0)
    >>> tx, tz = (coefficient_trajectory(seq, Disorder(m)) for m in (0, 2))
    >>> first_order_integral(tx, tz).value
    1.0
    """
    a = _convention(traj_a, exact_boundary)
    b = _convention(traj_b, exact_boundary)
    ab = _ordered_terms(a, b)
    ba = _ordered_terms(b, a)
    value = math.fsum(ab + [-t for t in ba])
    return TermPairIntegral((traj_a.kind, traj_b.kind), value, math.fsum(ab), exact_boundary)


def _lengthened_frames(traj: CoefficientTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame values and durations tau_k + (2 tau_p / pi) * (#adjacent ramps)."""
    w = traj.frame_taus + (2 * traj.tau_p / _PI) * (traj.ramp_in.astype(float) + traj.ramp_out.astype(float))
    return traj.frame_values, w


def second_order_disorder_integral(
    traj_a: CoefficientTrajectory, traj_b: CoefficientTrajectory, traj_c: CoefficientTrajectory
) -> TermTripleIntegral:
    """2 int c_a(t) c1_bc(t) dt - c1_bc(T) int c_a, for disorder families.

    ``c1_bc(t) = A_bc(t) - A_cb(t)`` is the antisymmetrized first-order integral
    accumulated up to time t.  Frames are treated as flat blocks of the
    lengthened duration tau_k + (2 tau_p / pi)(ramps in + ramps out), which is
    exact for ideal pulses.  Inside a frame c1_bc grows linearly with slope
    c_b C_c - c_c C_b, so the frame contributes c_a w (c1_start + slope w / 2).
    """
    for t in (traj_a, traj_b, traj_c):
        if t.kind.family != "D":
            raise ValueError(f"second-order closed form is limited to disorder families, got {t.kind.label}")
    fa, w = _lengthened_frames(traj_a)
    fb, _ = _lengthened_frames(traj_b)
    fc, _ = _lengthened_frames(traj_c)
    Cb = Cc = c1 = Ia = 0.0
    main = []
    for k in range(len(w)):
        wk = w[k]
        slope = fb[k] * Cc - fc[k] * Cb
        if fa[k] != 0:
            main.append(2 * fa[k] * wk * c1)
            main.append(fa[k] * wk * wk * slope)
            Ia += fa[k] * wk
        c1 += slope * wk
        Cb += fb[k] * wk
        Cc += fc[k] * wk
    main.append(-c1 * Ia)
    return TermTripleIntegral((traj_a.kind, traj_b.kind, traj_c.kind), math.fsum(main))


def _cells(trajs, resolution: int):
    """Cell widths and midpoint values of each trajectory on a shared grid."""
    bounds = [0.0]
    for tr in trajs:
        t = 0.0
        for s in tr.segments:
            t += s.duration
            bounds.append(t)
    period = trajs[0].period
    for tr in trajs[1:]:
        if not math.isclose(tr.period, period, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError("trajectories have different periods")
    b = np.unique(np.round(np.array(bounds) / max(period, 1e-300), 12)) * period
    b = b[(b >= 0) & (b <= period)]
    edges = []
    for lo, hi in zip(b[:-1], b[1:]):
        if hi - lo <= 1e-12 * period:
            continue
        edges.append(np.linspace(lo, hi, resolution + 1)[:-1])
    if not edges:
        return np.zeros(0), [np.zeros(0) for _ in trajs]
    left = np.concatenate(edges)
    right = np.append(left[1:], period)
    h = right - left
    mid = 0.5 * (left + right)
    return h, [tr.sample(mid) for tr in trajs]


def brute_force_integral(trajs, order: int = 1, resolution: int = 1000) -> float:
    """Composite-midpoint quadrature oracle for the Magnus simplex integrals.

    ``order=1`` returns int c_a(t1) int_0^t1 c_b(t2) for ``trajs = (a, b)``.
    ``order=2`` returns 2 int c_a c1_bc - c1_bc(T) int c_a for ``(a, b, c)``
    with c1_bc(t) the antisymmetrized first-order integral up to t.

    The trajectories are sampled pointwise, ``resolution`` cells per segment
    of the common refinement; the error decreases as resolution**-2.
    """
    if resolution < 100:
        raise ValueError("resolution must be at least 100 cells per segment")
    if order == 1:
        a, b = trajs
        h, (ca, cb) = _cells([a, b], resolution)
        Cb_left = np.concatenate([[0.0], np.cumsum(cb * h)[:-1]])
        return float(np.sum(ca * h * (Cb_left + 0.5 * h * cb)))
    if order == 2:
        a, b, c = trajs
        h, (ca, cb, cc) = _cells([a, b, c], resolution)
        Ib = np.cumsum(cb * h)
        Ic = np.cumsum(cc * h)
        Ib_left = np.concatenate([[0.0], Ib[:-1]])
        Ic_left = np.concatenate([[0.0], Ic[:-1]])
        # d c1 / dt = c_b C_c - c_c C_b, integrated with midpoint values of C
        rate = cb * (Ic_left + 0.5 * h * cc) - cc * (Ib_left + 0.5 * h * cb)
        c1_right = np.cumsum(rate * h)
        c1_left = np.concatenate([[0.0], c1_right[:-1]])
        c1_mid = 0.5 * (c1_left + c1_right)
        return float(2 * np.sum(ca * h * c1_mid) - c1_right[-1] * np.sum(ca * h)) if len(h) else 0.0
    raise ValueError("order must be 1 or 2")


# --------------------------------------------------------------------------
# operator-level assembly


def zeroth_order_hamiltonian(seq: PulseSequence, params) -> np.ndarray:
    """H0 = (1/T) sum_alpha O_alpha int c_alpha."""
    from .operators import kind_operator

    T = seq.T
    d = 2**params.n_spins
    H = np.zeros((d, d), dtype=complex)
    for kind in all_kinds():
        I = zeroth_integral(coefficient_trajectory(seq, kind))
        if I != 0:
            H += I * kind_operator(kind, params)
    return H / T


def first_order_hamiltonian(seq: PulseSequence, params, exact_boundary: bool = True) -> np.ndarray:
    """H1 = -i/(2T) sum_{alpha>beta} [O_alpha, O_beta] V_ab over all operator families."""
    from .operators import kind_operator

    T = seq.T
    kinds = all_kinds()
    trajs = [coefficient_trajectory(seq, k) for k in kinds]
    ops = [kind_operator(k, params) for k in kinds]
    d = 2**params.n_spins
    H = np.zeros((d, d), dtype=complex)
    for i in range(len(kinds)):
        for j in range(i):
            comm = ops[i] @ ops[j] - ops[j] @ ops[i]
            if not np.any(comm):
                continue
            v = first_order_integral(trajs[i], trajs[j], exact_boundary=exact_boundary).value
            H += v * comm
    return (-1j / (2 * T)) * H


def pulse_cycle_cross_term(seq_a: PulseSequence, seq_b: PulseSequence, params) -> dict[str, float]:
    """Middle term -i/(4T) [T H0_B, T H0_A] of A followed by B, as Pauli coefficients.

    For two blocks of equal length T the first-order term of the concatenated
    cycle is H1_A / 2 + H1_B / 2 plus this commutator.
    """
    from .operators import pauli_decompose

    Ta, Tb = seq_a.T, seq_b.T
    if not math.isclose(Ta, Tb, rel_tol=1e-12):
        raise ValueError(f"blocks must have equal duration ({Ta} vs {Tb})")
    HA = zeroth_order_hamiltonian(seq_a, params) * Ta
    HB = zeroth_order_hamiltonian(seq_b, params) * Tb
    M = (-1j / (4 * Ta)) * (HB @ HA - HA @ HB)
    return pauli_decompose(M)


def concatenate(seq_a: PulseSequence, seq_b: PulseSequence) -> PulseSequence:
    """Block A followed by block B as one cycle (shared pulse length)."""
    if seq_a.tau_p != seq_b.tau_p:
        raise ValueError("blocks must share the pulse length")
    fa, fb = seq_a.frames, seq_b.frames
    return PulseSequence.build(
        list(fa.axes) + list(fb.axes),
        list(fa.taus) + list(fb.taus),
        seq_a.tau_p,
        list(fa.pulse_frames) + list(fb.pulse_frames),
        allow_repeats=True,
    )


def pulse_cycle_decomposition(seq_a: PulseSequence, seq_b: PulseSequence, params, exact_boundary: bool = True) -> dict:
    """First-order term of A then B against its block decomposition.

    Returns the matrices ``H1`` (concatenated cycle), ``half_sum``
    (H1_A / 2 + H1_B / 2), ``cross`` (the commutator term) and the norm of
    ``[H0_A, H0_B]``.  When both blocks start in the same frame the window
    layout of each block inside the cycle equals its own, and
    H1 = half_sum + cross holds exactly in the literal-cycle convention.
    """
    from .operators import pauli_compose

    H1 = first_order_hamiltonian(concatenate(seq_a, seq_b), params, exact_boundary)
    half = 0.5 * (first_order_hamiltonian(seq_a, params, exact_boundary) + first_order_hamiltonian(seq_b, params, exact_boundary))
    cross = pauli_compose(pulse_cycle_cross_term(seq_a, seq_b, params), params.n_spins)
    HA = zeroth_order_hamiltonian(seq_a, params)
    HB = zeroth_order_hamiltonian(seq_b, params)
    return {"H1": H1, "half_sum": half, "cross": cross, "commutator_norm": float(np.linalg.norm(HA @ HB - HB @ HA))}
