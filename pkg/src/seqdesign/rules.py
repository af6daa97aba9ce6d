"""Decoupling rules on frame matrices.

Each rule is an algebraic condition on the signed axis matrix F (3 x n), the
free durations and the pulse length whose vanishing cancels one family of
Magnus contributions.  Rows:

====  =============================  ==============================
row   operator pair                  motif that cancels the main term
====  =============================  ==============================
0     zeroth order                   echo (disorder), axis balance
1     disorder - disorder            fast echo
2     disorder - Ising               fast echo
3     Ising - Ising                  block mirror symmetrization
4     disorder - Heisenberg          dipole cancellation
5     Ising - Heisenberg             row balancing
7     second order, disorder only    fast echo
====  =============================  ==============================

Row 6 (Heisenberg - Heisenberg) vanishes identically and produces no entries.

Normalization.  Rows 1-3 and 7 are expressed like 2 sum(...) - (total)(total),
which is the antisymmetrized Magnus coefficient V_ab = A_ab - A_ba.  Rows 4
and 5 use half of it, A_ab - (1/2) I_a I_b.  With finite pulses the pulse
column is the overlap correction of one pulse window; it enters V_ab twice.
So for rows 1-3: V = main + 2 pulse + q, and for rows 4-5: V / 2 = main + q.

Residual weights.  A frame with free duration tau_k that is entered and left
through pi/2 pulses has disorder weight tau_k + 4 tau_p / pi and Ising weight
tau_k + tau_p; frames next to a continuation (no pulse) only get the ramp
contributions actually present.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import PulseSequence

__all__ = [
    "RULE_IDS",
    "CumulativeSums",
    "RuleEntry",
    "RuleReport",
    "cumulative_sums",
    "zeroth_rules",
    "rule_row1_disorder_disorder",
    "rule_row2_disorder_ising",
    "rule_row3_ising_ising",
    "rule_row4_disorder_heisenberg",
    "rule_row5_ising_heisenberg",
    "rule_row7_second_order_disorder",
    "evaluate_ruleset",
    "engine_ruleset",
    "format_report",
    "parse_report",
    "rule_order",
]

RULE_IDS = (0, 1, 2, 3, 4, 5, 6, 7)
AX = "xyz"
PAIRS = [(m, v) for m in range(3) for v in range(3) if m != v]
TRIPLES = [(m, v, r) for (v, r) in PAIRS for m in (v, r)]

_PI = math.pi
C_DIS_DIS = 1 - _PI / 4
C_DIS_ISI = _PI / 4 - 2 / 3
C_ISI_ISI = _PI**2 / 32 - 0.25
C_Q_DIS = 1 / 6  # disorder ramp against a cross ramp, in units of (2 tau_p / pi)^2
C_Q_ISI = _PI / 32  # Ising ramp against a cross ramp
# weight times center-of-mass offset of a ramp-out, in units of tau_p^2
C_RAMP_DIS = (2 / _PI) * (1 - 2 / _PI)
C_RAMP_ISI = 0.5 * (0.5 - 2 / _PI**2)


def rule_order(rule: int) -> int:
    """Magnus order of a rule row (sets the power of T in the tolerance)."""
    return {0: 0, 7: 2}.get(rule, 1)


@dataclass(frozen=True)
class _Frames:
    """Per-frame data shared by all rows."""

    F: np.ndarray  # (3, n) signed axis matrix
    A: np.ndarray  # (3, n) |F|
    tau: np.ndarray
    tau_p: float
    ramp_out: np.ndarray  # pulse window after frame k
    ramp_in: np.ndarray
    wD: np.ndarray
    wI: np.ndarray
    start: np.ndarray  # start of free evolution in the unrolled timeline
    T: float

    @property
    def n(self) -> int:
        return len(self.tau)

    @property
    def t_mid(self) -> np.ndarray:
        return self.start + 0.5 * self.tau


def _frames(seq: PulseSequence) -> _Frames:
    F = seq.frames.F
    tau = seq.taus
    n = len(tau)
    tp = seq.tau_p
    rot = seq.rotations
    ramp_out = (rot == 1) & (tp > 0) if n >= 2 else np.zeros(n, dtype=bool)
    ramp_in = np.roll(ramp_out, 1)
    nr = ramp_in.astype(float) + ramp_out.astype(float)
    wD = tau + (2 * tp / _PI) * nr
    wI = tau + (tp / 2) * nr
    start = np.zeros(n)
    t = tp if (n and ramp_in[0]) else 0.0
    for k in range(n):
        start[k] = t
        t += tau[k] + tp * rot[k]
    return _Frames(F, np.abs(F), tau, tp, ramp_out, ramp_in, wD, wI, start, seq.T)


def _prefix(x: np.ndarray) -> np.ndarray:
    """Exclusive running sums along the last axis, accumulated left to right."""
    out = np.zeros_like(x)
    acc = np.zeros(x.shape[:-1])
    for k in range(x.shape[-1]):
        out[..., k] = acc
        acc = acc + x[..., k]
    return out


def _suffix(x: np.ndarray) -> np.ndarray:
    """Exclusive running sums accumulated right to left."""
    return _prefix(x[..., ::-1])[..., ::-1]


def _fsum(terms) -> float:
    return math.fsum(float(t) for t in np.ravel(terms))


@dataclass(frozen=True)
class CumulativeSums:
    """Running sums of the weighted frame matrix.

    ``F_lt[mu, k]`` is sum_{l<k} F_{mu,l} (tau_l + 4 tau_p/pi) and ``I_lt`` the
    same with |F| and tau_l + tau_p.  Column n holds the totals.
    ``F2_lt[(nu, rho)][k]`` is the antisymmetrized first-order disorder
    integral accumulated before frame k.
    """

    F_lt: np.ndarray
    I_lt: np.ndarray
    F_bar: np.ndarray
    I_bar: np.ndarray
    F2_lt: dict
    F2_bar: dict


def cumulative_sums(seq: PulseSequence) -> CumulativeSums:
    fr = _frames(seq)
    FW = fr.F * fr.wD
    IW = fr.A * fr.wI
    F_lt = np.concatenate([_prefix(FW), np.zeros((3, 1))], axis=1)
    I_lt = np.concatenate([_prefix(IW), np.zeros((3, 1))], axis=1)
    F_lt[:, -1] = [_fsum(r) for r in FW]
    I_lt[:, -1] = [_fsum(r) for r in IW]
    F2_lt, F2_bar = {}, {}
    for nu, rho in PAIRS:
        c1, _ = _c1_track(fr.F[nu], fr.F[rho], fr.wD)
        F2_lt[(nu, rho)] = c1[:-1]
        F2_bar[(nu, rho)] = c1[-1]
    return CumulativeSums(F_lt, I_lt, F_lt[:, -1].copy(), I_lt[:, -1].copy(), F2_lt, F2_bar)


def _c1_track(fb: np.ndarray, fc: np.ndarray, w: np.ndarray):
    """c1_bc at the start of each frame (plus the total) and its slope per frame."""
    n = len(w)
    c1 = np.zeros(n + 1)
    slope = np.zeros(n)
    Cb = Cc = acc = 0.0
    for k in range(n):
        slope[k] = fb[k] * Cc - fc[k] * Cb
        c1[k] = acc
        acc += slope[k] * w[k]
        Cb += fb[k] * w[k]
        Cc += fc[k] * w[k]
    c1[n] = acc
    return c1, slope


# --------------------------------------------------------------------------
# cross (q) terms of finite pulses


@dataclass(frozen=True)
class _Windows:
    """Pulse windows in the unrolled timeline (closing window last)."""

    idx: np.ndarray  # frame index k of window k -> k+1
    dep: np.ndarray  # departing axis
    arr: np.ndarray  # arriving axis
    amp: np.ndarray  # F_dep,k * F_arr,k+1
    Q: np.ndarray  # amp * tau_p / pi
    closing: np.ndarray
    begin: np.ndarray  # start time of the window


def _windows(fr: _Frames) -> _Windows:
    n = fr.n
    ks = [k for k in range(n) if fr.ramp_out[k]]
    ax = np.argmax(fr.A, axis=0) if n else np.zeros(0, dtype=int)
    sg = fr.F[ax, np.arange(n)] if n else np.zeros(0)
    idx = np.array(ks, dtype=int)
    nxt = (idx + 1) % max(n, 1)
    amp = sg[idx] * sg[nxt] if len(idx) else np.zeros(0)
    return _Windows(
        idx=idx,
        dep=ax[idx] if len(idx) else idx,
        arr=ax[nxt] if len(idx) else idx,
        amp=amp,
        Q=amp * fr.tau_p / _PI,
        closing=idx == n - 1,
        begin=fr.start[idx] + fr.tau[idx] if len(idx) else np.zeros(0),
    )


def _q_against(fr: _Frames, win: _Windows, values: np.ndarray, weights: np.ndarray, const: float, sel):
    """V between a frame-local family (values, weights) and cross windows ``sel``.

    A = sum_j Q_j (weight after window j) + amp_j r^2 const (v_j - v_{j+1}),
    V = 2 A - (family total) * sum_j Q_j.
    """
    n = fr.n
    r2 = (2 * fr.tau_p / _PI) ** 2
    C = values * weights
    after = _suffix(C) if n else C  # sum over frames k > j
    total = _fsum(C)
    terms = []
    for j in np.nonzero(sel)[0]:
        k = win.idx[j]
        v_next = 0.0 if win.closing[j] else values[k + 1]
        a_after = 0.0 if win.closing[j] else after[k]
        terms.append(2 * win.Q[j] * a_after)
        terms.append(2 * win.amp[j] * r2 * const * (values[k] - v_next))
        terms.append(-total * win.Q[j])
    return _fsum(terms)


def _q_cross_cross(win: _Windows, sel_a, sel_b) -> float:
    """V between two sets of cross windows: sum sign(j - l) Q_j Q_l."""
    terms = []
    qa = np.where(sel_a, win.Q, 0.0)
    qb = np.where(sel_b, win.Q, 0.0)
    before_b = _prefix(qb) if len(qb) else qb
    after_b = _suffix(qb) if len(qb) else qb
    for j in range(len(qa)):
        if qa[j]:
            terms.append(qa[j] * (before_b[j] - after_b[j]))
    return _fsum(terms)


# --------------------------------------------------------------------------
# rows


def zeroth_rules(seq: PulseSequence) -> dict:
    """Zeroth-order sums: disorder total per axis and Ising imbalance per axis pair."""
    fr = _frames(seq)
    Fb = [_fsum(fr.F[m] * fr.wD) for m in range(3)]
    Ib = [_fsum(fr.A[m] * fr.wI) for m in range(3)]
    imb = {(m, v): Ib[m] - Ib[v] for m in range(3) for v in range(m + 1, 3)}
    return {"disorder": Fb, "ising": Ib, "imbalance": imb, "max_imbalance": max((abs(x) for x in imb.values()), default=0.0)}


def _pulse_sum(fr: _Frames, X: np.ndarray, Y: np.ndarray) -> float:
    """sum over internal pulse windows of X_k Y_{k+1} - Y_k X_{k+1}."""
    terms = []
    for k in range(fr.n - 1):
        if fr.ramp_out[k]:
            terms.append(X[k] * Y[k + 1] - Y[k] * X[k + 1])
    return _fsum(terms)


def rule_row1_disorder_disorder(seq: PulseSequence) -> dict:
    """(main, pulse) per ordered axis pair (mu, nu)."""
    fr = _frames(seq)
    r2 = (2 * fr.tau_p / _PI) ** 2
    FW = fr.F * fr.wD
    Flt = _prefix(FW)
    Fb = [_fsum(r) for r in FW]
    out = {}
    for m, v in PAIRS:
        main = _fsum(np.concatenate([2 * FW[m] * Flt[v], [-Fb[m] * Fb[v]]]))
        out[(m, v)] = (main, r2 * C_DIS_DIS * _pulse_sum(fr, fr.F[m], fr.F[v]))
    return out


def rule_row2_disorder_ising(seq: PulseSequence) -> dict:
    """(main, pulse, q) per ordered pair (mu disorder, nu Ising)."""
    fr = _frames(seq)
    win = _windows(fr)
    r2 = (2 * fr.tau_p / _PI) ** 2
    FW = fr.F * fr.wD
    IW = fr.A * fr.wI
    Ilt = _prefix(IW)
    Fb = [_fsum(r) for r in FW]
    Ib = [_fsum(r) for r in IW]
    out = {}
    for m, v in PAIRS:
        main = _fsum(np.concatenate([2 * FW[m] * Ilt[v], [-Fb[m] * Ib[v]]]))
        pulse = r2 * C_DIS_ISI * _pulse_sum(fr, fr.F[m], fr.A[v])
        q = _q_against(fr, win, fr.F[m], fr.wD, C_Q_DIS, win.dep == v) if fr.tau_p > 0 else 0.0
        out[(m, v)] = (main, pulse, q)
    return out


def rule_row3_ising_ising(seq: PulseSequence) -> dict:
    """(main, pulse, q) per ordered Ising pair (mu, nu)."""
    fr = _frames(seq)
    win = _windows(fr)
    r2 = (2 * fr.tau_p / _PI) ** 2
    IW = fr.A * fr.wI
    Ilt = _prefix(IW)
    Igt = _suffix(IW)
    out = {}
    for m, v in PAIRS:
        main = _fsum(IW[m] * (Ilt[v] - Igt[v]))
        pulse = r2 * C_ISI_ISI * _pulse_sum(fr, fr.A[m], fr.A[v])
        q = 0.0
        if fr.tau_p > 0:
            q = _fsum(
                [
                    _q_against(fr, win, fr.A[m], fr.wI, C_Q_ISI, win.dep == v),
                    -_q_against(fr, win, fr.A[v], fr.wI, C_Q_ISI, win.dep == m),
                    _q_cross_cross(win, win.dep == m, win.dep == v),
                    -_q_cross_cross(win, (win.dep == m) & (win.arr == v), (win.dep == v) & (win.arr == m)),
                ]
            )
        out[(m, v)] = (main, pulse, q)
    return out


def rule_row4_disorder_heisenberg(seq: PulseSequence) -> dict:
    """Dipole residual sum_k F_mu,k w_k (t_k - T/2) per axis."""
    fr = _frames(seq)
    dt = fr.t_mid - 0.5 * fr.T
    out = {m: _fsum(fr.F[m] * fr.wD * dt) for m in range(3)}
    if _closing(fr):
        # the closing ramp-out lies past the Heisenberg support and counts at T
        for m in range(3):
            out[m] = _fsum([out[m], -fr.F[m, -1] * C_RAMP_DIS * fr.tau_p**2])
    return out


def _closing(fr: _Frames) -> bool:
    return bool(fr.n >= 2 and fr.ramp_out[-1])


def rule_row5_ising_heisenberg(seq: PulseSequence, table_constants: bool = False) -> dict:
    """(main, q) per axis: sum_k |F_mu,k| w_k (t_k - T/2) and the cross-term center of mass."""
    fr = _frames(seq)
    win = _windows(fr)
    w = fr.wD if table_constants else fr.wI
    dt = fr.t_mid - 0.5 * fr.T
    out = {}
    for m in range(3):
        main = _fsum(fr.A[m] * w * dt)
        if _closing(fr) and not table_constants:
            main = _fsum([main, -fr.A[m, -1] * C_RAMP_ISI * fr.tau_p**2])
        terms = []
        for j in np.nonzero(win.dep == m)[0]:
            mid = fr.T if win.closing[j] else win.begin[j] + 0.5 * fr.tau_p
            terms.append(win.Q[j] * (mid - 0.5 * fr.T))
        out[m] = (main, _fsum(terms))
    return out


def rule_row7_second_order_disorder(seq: PulseSequence, table_constants: bool = False) -> dict:
    """Second-order disorder residual per triple (mu; nu, rho) with mu in {nu, rho}.

    Uses the antisymmetrized first-order integral c1_{nu rho} evaluated at the
    middle of each frame, so the result is exact for ideal pulses.
    """
    fr = _frames(seq)
    if table_constants:
        nr = fr.ramp_in.astype(float) + fr.ramp_out.astype(float)
        w = fr.tau + (fr.tau_p / _PI) * nr / 2
    else:
        w = fr.wD
    out = {}
    for m, v, r in TRIPLES:
        c1, slope = _c1_track(fr.F[v], fr.F[r], w)
        Fm = fr.F[m] * w
        terms = list(2 * Fm * c1[:-1]) + list(Fm * w * slope) + [-_fsum(Fm) * c1[-1]]
        out[(m, v, r)] = _fsum(terms)
    return out


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class RuleEntry:
    rule: int
    axes: str
    main: float
    pulse: float = 0.0
    q: float = 0.0
    passed: bool = True

    @property
    def magnitude(self) -> float:
        return max(abs(self.main), abs(self.pulse), abs(self.q))


@dataclass(frozen=True)
class RuleReport:
    entries: tuple[RuleEntry, ...]
    tolerance: float
    T: float
    table_constants: bool = False

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def residual_norm(self) -> float:
        return math.sqrt(math.fsum(e.main**2 + e.pulse**2 + e.q**2 for e in self.entries))

    def select(self, rule: int) -> list[RuleEntry]:
        return [e for e in self.entries if e.rule == rule]

    def get(self, rule: int, axes: str) -> RuleEntry:
        for e in self.entries:
            if e.rule == rule and e.axes == axes:
                return e
        raise KeyError((rule, axes))


def _entry(rule: int, axes: str, main: float, pulse: float, q: float, tol: float, T: float) -> RuleEntry:
    bound = tol * T ** (rule_order(rule) + 1)
    ok = abs(main) <= bound and abs(pulse) <= bound and abs(q) <= bound
    return RuleEntry(rule, axes, float(main), float(pulse), float(q), bool(ok))


def evaluate_ruleset(
    seq: PulseSequence, ruleset=RULE_IDS, tolerance: float = 1e-9, table_constants: bool = False
) -> RuleReport:
    """Evaluate the selected rule rows.

    An entry passes when all its residual components are at most
    ``tolerance * T**(order + 1)``.
    """
    rules = sorted(set(int(r) for r in ruleset))
    for r in rules:
        if r not in RULE_IDS:
            raise ValueError(f"unknown rule id {r}")
    T = seq.T
    e = []
    add = lambda rule, axes, main, pulse=0.0, q=0.0: e.append(_entry(rule, axes, main, pulse, q, tolerance, T))
    for r in rules:
        if r == 0:
            z = zeroth_rules(seq)
            for m in range(3):
                add(0, AX[m], z["disorder"][m])
            for (m, v), x in z["imbalance"].items():
                add(0, AX[m] + AX[v], x)
        elif r == 1:
            for (m, v), (main, pulse) in rule_row1_disorder_disorder(seq).items():
                add(1, AX[m] + AX[v], main, pulse)
        elif r == 2:
            for (m, v), (main, pulse, q) in rule_row2_disorder_ising(seq).items():
                add(2, AX[m] + AX[v], main, pulse, q)
        elif r == 3:
            for (m, v), (main, pulse, q) in rule_row3_ising_ising(seq).items():
                add(3, AX[m] + AX[v], main, pulse, q)
        elif r == 4:
            for m, main in rule_row4_disorder_heisenberg(seq).items():
                add(4, AX[m], main)
        elif r == 5:
            for m, (main, q) in rule_row5_ising_heisenberg(seq, table_constants).items():
                add(5, AX[m], main, 0.0, q)
        elif r == 7:
            for (m, v, rr), main in rule_row7_second_order_disorder(seq, table_constants).items():
                add(7, AX[m] + AX[v] + AX[rr], main)
    return RuleReport(tuple(e), float(tolerance), T, table_constants)


def engine_ruleset(
    seq: PulseSequence, ruleset=RULE_IDS, tolerance: float = 1e-9, exact_boundary: bool = True
) -> RuleReport:
    """Rule entries evaluated as totals by the first-order engine.

    Each entry's ``main`` holds the full coefficient that the closed-form row
    splits into main, pulse and q columns (V for rows 1-3, V/2 for rows 4-5),
    computed from the coefficient trajectories under the chosen boundary
    convention.  Row 0 is the zeroth-order row; row 7 uses the second-order
    disorder integral.  With ``exact_boundary=False`` (the unrolled timeline)
    the totals equal :func:`evaluate_ruleset` totals for rows 1-5; over the
    literal cycle they differ only when the cycle closes with a pulse.
    """
    from .frames import Disorder, Heisenberg, Ising, IsingCross, coefficient_trajectory
    from .magnus import first_order_integral, second_order_disorder_integral

    rules = sorted(set(int(r) for r in ruleset))
    for r in rules:
        if r not in RULE_IDS:
            raise ValueError(f"unknown rule id {r}")
    T = seq.T
    cache = {}

    def tr(k):
        if k not in cache:
            cache[k] = coefficient_trajectory(seq, k)
        return cache[k]

    def V(a, b):
        return first_order_integral(tr(a), tr(b), exact_boundary=exact_boundary).value

    def fam(m):
        return [Ising(m)] + [IsingCross(m, r) for r in range(3) if r != m]

    e = []
    add = lambda rule, axes, x: e.append(_entry(rule, axes, x, 0.0, 0.0, tolerance, T))
    for r in rules:
        if r == 0:
            z = zeroth_rules(seq)
            for m in range(3):
                add(0, AX[m], z["disorder"][m])
            for (m, v), x in z["imbalance"].items():
                add(0, AX[m] + AX[v], x)
        for m, v in PAIRS:
            ax = AX[m] + AX[v]
            if r == 1:
                add(1, ax, V(Disorder(m), Disorder(v)))
            elif r == 2:
                add(2, ax, math.fsum(V(Disorder(m), k) for k in fam(v)))
            elif r == 3:
                tot = math.fsum(V(a, b) for a in fam(m) for b in fam(v))
                add(3, ax, tot - V(IsingCross(m, v), IsingCross(v, m)))
        for m in range(3):
            if r == 4:
                add(4, AX[m], V(Disorder(m), Heisenberg()) / 2)
            elif r == 5:
                add(5, AX[m], math.fsum(V(k, Heisenberg()) for k in fam(m)) / 2)
        if r == 7:
            for m, v, rr in TRIPLES:
                x = second_order_disorder_integral(tr(Disorder(m)), tr(Disorder(v)), tr(Disorder(rr))).value
                add(7, AX[m] + AX[v] + AX[rr], x)
    return RuleReport(tuple(e), float(tolerance), T, False)


def format_report(report: RuleReport) -> str:
    lines = [
        f"rule={e.rule} axes={e.axes} main={e.main!r} pulse={e.pulse!r} q={e.q!r} pass={int(e.passed)}"
        for e in report.entries
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_report(text: str) -> list[RuleEntry]:
    """Parse report lines back into entries."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        kv = dict(tok.split("=", 1) for tok in line.split())
        try:
            out.append(
                RuleEntry(
                    int(kv["rule"]),
                    kv["axes"],
                    float(kv["main"]),
                    float(kv["pulse"]),
                    float(kv["q"]),
                    kv["pass"] == "1",
                )
            )
        except KeyError as exc:
            raise ValueError(f"report line is missing field {exc}: {line!r}") from None
    return out
