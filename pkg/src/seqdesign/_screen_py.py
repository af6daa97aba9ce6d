"""Batch rule evaluation in numpy (fallback for the compiled kernel).

Candidates are given as label arrays (1-6 for +x,+y,+z,-x,-y,-z) of a common
length together with their free durations.  All rows are evaluated with
running sums, vectorized across the batch; the loop runs over frame index.
The output is the residual tensor ``(batch, N_ENTRIES, 3)`` holding
(main, pulse, q) in the entry order of :data:`ENTRY_RULE`.
"""
from __future__ import annotations

import math

import numpy as np

_PI = math.pi
PAIRS = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
TRIPLES = [(m, v, r) for (v, r) in PAIRS for m in (v, r)]
IMB = [(0, 1), (0, 2), (1, 2)]

ENTRY_RULE = np.array([0] * 6 + [1] * 6 + [2] * 6 + [3] * 6 + [4] * 3 + [5] * 3 + [7] * 12)
ENTRY_AXES = (
    ["x", "y", "z", "xy", "xz", "yz"]
    + ["xyz"[m] + "xyz"[v] for m, v in PAIRS] * 3
    + ["x", "y", "z"] * 2
    + ["xyz"[m] + "xyz"[v] + "xyz"[r] for m, v, r in TRIPLES]
)
N_ENTRIES = len(ENTRY_RULE)
OFF = {0: 0, 1: 6, 2: 12, 3: 18, 4: 24, 5: 27, 7: 30}

C_DIS_DIS = 1 - _PI / 4
C_DIS_ISI = _PI / 4 - 2 / 3
C_ISI_ISI = _PI**2 / 32 - 0.25
C_Q_DIS = 1 / 6
C_Q_ISI = _PI / 32
C_RAMP_DIS = (2 / _PI) * (1 - 2 / _PI)
C_RAMP_ISI = 0.5 * (0.5 - 2 / _PI**2)


def rule_mask(rules) -> np.ndarray:
    m = np.zeros(8, dtype=np.uint8)
    for r in rules:
        m[int(r)] = 1
    return m


def residuals(labels: np.ndarray, tau: np.ndarray, tau_p: float, mask: np.ndarray, table_constants: bool = False):
    """Residual tensor and cycle times for a batch of equal-length candidates.

    Returns
    -------
    res : ndarray, shape (B, N_ENTRIES, 3)
    T : ndarray, shape (B,)
    valid : ndarray of bool, False where an antiparallel transition meets tau_p > 0
    """
    labels = np.asarray(labels, dtype=np.int64)
    tau = np.asarray(tau, dtype=float)
    B, L = labels.shape
    res = np.zeros((B, N_ENTRIES, 3))
    ax = (labels - 1) % 3
    sg = np.where(labels <= 3, 1.0, -1.0)
    F = np.zeros((B, 3, L))
    bi = np.arange(B)[:, None]
    ki = np.arange(L)[None, :]
    F[bi, ax, ki] = sg
    A = np.abs(F)
    if L >= 2:
        nxt = np.roll(labels, -1, axis=1)
        rot = np.where(nxt == labels, 0, np.where(np.abs(nxt - labels) == 3, 2, 1))
    else:
        rot = np.zeros((B, L), dtype=np.int64)
    valid = ~np.any(rot == 2, axis=1) if tau_p > 0 else np.ones(B, dtype=bool)
    ramp = (rot == 1) & (tau_p > 0)
    rin = np.roll(ramp, 1, axis=1) if L else ramp
    nr = ramp.astype(float) + rin.astype(float)
    wD = tau + (2 * tau_p / _PI) * nr
    wI = tau + (tau_p / 2) * nr
    T = tau.sum(axis=1) + tau_p * rot.sum(axis=1)
    start = np.zeros((B, L))
    t = np.where(rin[:, 0], tau_p, 0.0) if L else np.zeros(B)
    for k in range(L):
        start[:, k] = t
        t = t + tau[:, k] + tau_p * rot[:, k]
    tmid = start + 0.5 * tau
    FW = F * wD[:, None, :]
    IW = A * wI[:, None, :]
    Fb = FW.sum(axis=2)
    Ib = IW.sum(axis=2)
    r2 = (2 * tau_p / _PI) ** 2

    if mask[0]:
        res[:, 0:3, 0] = Fb
        for e, (m, v) in enumerate(IMB):
            res[:, 3 + e, 0] = Ib[:, m] - Ib[:, v]

    need_lt = mask[1] or mask[2] or mask[3] or mask[7]
    if need_lt:
        Flt = np.zeros((B, 3))
        Ilt = np.zeros((B, 3))
        s1 = np.zeros((B, 6))
        s2 = np.zeros((B, 6))
        s3 = np.zeros((B, 6))
        for k in range(L):
            fw = FW[:, :, k]
            iw = IW[:, :, k]
            for e, (m, v) in enumerate(PAIRS):
                if mask[1]:
                    s1[:, e] += fw[:, m] * Flt[:, v]
                if mask[2]:
                    s2[:, e] += fw[:, m] * Ilt[:, v]
                if mask[3]:
                    # I_>k = Ib - I_<k - own
                    s3[:, e] += iw[:, m] * (2 * Ilt[:, v] + iw[:, v] - Ib[:, v])
            Flt += fw
            Ilt += iw
        for e, (m, v) in enumerate(PAIRS):
            if mask[1]:
                res[:, OFF[1] + e, 0] = 2 * s1[:, e] - Fb[:, m] * Fb[:, v]
            if mask[2]:
                res[:, OFF[2] + e, 0] = 2 * s2[:, e] - Fb[:, m] * Ib[:, v]
            if mask[3]:
                res[:, OFF[3] + e, 0] = s3[:, e]

    if tau_p > 0 and (mask[1] or mask[2] or mask[3]):
        for k in range(L - 1):
            on = ramp[:, k]
            for e, (m, v) in enumerate(PAIRS):
                if mask[1]:
                    res[:, OFF[1] + e, 1] += on * (F[:, m, k] * F[:, v, k + 1] - F[:, v, k] * F[:, m, k + 1])
                if mask[2]:
                    res[:, OFF[2] + e, 1] += on * (F[:, m, k] * A[:, v, k + 1] - A[:, v, k] * F[:, m, k + 1])
                if mask[3]:
                    res[:, OFF[3] + e, 1] += on * (A[:, m, k] * A[:, v, k + 1] - A[:, v, k] * A[:, m, k + 1])
        res[:, OFF[1] : OFF[1] + 6, 1] *= r2 * C_DIS_DIS
        res[:, OFF[2] : OFF[2] + 6, 1] *= r2 * C_DIS_ISI
        res[:, OFF[3] : OFF[3] + 6, 1] *= r2 * C_ISI_ISI

    if mask[4] or mask[5]:
        dt = tmid - 0.5 * T[:, None]
        if mask[4]:
            res[:, OFF[4] : OFF[4] + 3, 0] = np.einsum("bmk,bk->bm", FW, dt)
        if mask[5]:
            w5 = wD if table_constants else wI
            res[:, OFF[5] : OFF[5] + 3, 0] = np.einsum("bmk,bk->bm", A * w5[:, None, :], dt)
        if L >= 2:
            # closing ramp-out counts at T, not at its center of mass
            close = ramp[:, -1] * tau_p**2
            if mask[4]:
                res[:, OFF[4] : OFF[4] + 3, 0] -= F[:, :, -1] * (C_RAMP_DIS * close)[:, None]
            if mask[5] and not table_constants:
                res[:, OFF[5] : OFF[5] + 3, 0] -= A[:, :, -1] * (C_RAMP_ISI * close)[:, None]

    if tau_p > 0 and (mask[2] or mask[3] or mask[5]):
        _q_terms(res, F, A, FW, IW, Fb, Ib, ax, sg, ramp, start, tau, tau_p, T, mask)

    if mask[7]:
        if table_constants:
            w7 = tau + (tau_p / _PI) * nr / 2
        else:
            w7 = wD
        FW7 = F * w7[:, None, :]
        for e, (m, v, r) in enumerate(TRIPLES):
            Cv = np.zeros(B)
            Cr = np.zeros(B)
            c1 = np.zeros(B)
            acc = np.zeros(B)
            for k in range(L):
                wk = w7[:, k]
                slope = F[:, v, k] * Cr - F[:, r, k] * Cv
                acc += 2 * FW7[:, m, k] * c1 + FW7[:, m, k] * wk * slope
                c1 = c1 + slope * wk
                Cv = Cv + FW7[:, v, k]
                Cr = Cr + FW7[:, r, k]
            res[:, OFF[7] + e, 0] = acc - FW7[:, m, :].sum(axis=1) * c1
    return res, T, valid


def _q_terms(res, F, A, FW, IW, Fb, Ib, ax, sg, ramp, start, tau, tau_p, T, mask):
    """Cross-term corrections of rows 2, 3 and 5."""
    B, _, L = F.shape
    r2 = (2 * tau_p / _PI) ** 2
    bidx = np.arange(B)
    qtot_dep = np.zeros((B, 3))
    qtot_pair = np.zeros((B, 3, 3))
    # first pass: family totals
    for k in range(L):
        on = ramp[:, k]
        k1 = (k + 1) % L
        Q = on * sg[:, k] * sg[:, k1] * tau_p / _PI
        qtot_dep[bidx, ax[:, k]] += Q
        qtot_pair[bidx, ax[:, k], ax[:, k1]] += Q
    qcum_dep = np.zeros((B, 3))
    qcum_pair = np.zeros((B, 3, 3))
    Flt = np.zeros((B, 3))
    Ilt = np.zeros((B, 3))
    for k in range(L):
        Flt += FW[:, :, k]
        Ilt += IW[:, :, k]
        on = ramp[:, k]
        if not on.any():
            continue
        closing = k == L - 1
        k1 = (k + 1) % L
        amp = on * sg[:, k] * sg[:, k1]
        Q = amp * tau_p / _PI
        dep = ax[:, k]
        arr = ax[:, k1]
        Fafter = np.zeros((B, 3)) if closing else Fb - Flt
        Iafter = np.zeros((B, 3)) if closing else Ib - Ilt
        Fnext = np.zeros((B, 3)) if closing else F[:, :, k1]
        Anext = np.zeros((B, 3)) if closing else A[:, :, k1]
        for m in range(3):
            qd = 2 * Q * Fafter[:, m] + 2 * amp * r2 * C_Q_DIS * (F[:, m, k] - Fnext[:, m]) - Fb[:, m] * Q
            qi = 2 * Q * Iafter[:, m] + 2 * amp * r2 * C_Q_ISI * (A[:, m, k] - Anext[:, m]) - Ib[:, m] * Q
            for e, (mu, nu) in enumerate(PAIRS):
                if mask[2] and mu == m:
                    res[:, OFF[2] + e, 2] += np.where(dep == nu, qd, 0.0)
                if mask[3]:
                    if mu == m:
                        res[:, OFF[3] + e, 2] += np.where(dep == nu, qi, 0.0)
                    if nu == m:
                        res[:, OFF[3] + e, 2] -= np.where(dep == mu, qi, 0.0)
        if mask[3]:
            for e, (mu, nu) in enumerate(PAIRS):
                # this window in family mu against all windows of family nu
                cc = np.where(dep == mu, Q * (2 * qcum_dep[:, nu] - qtot_dep[:, nu]), 0.0)
                sel = (dep == mu) & (arr == nu)
                cc -= np.where(sel, Q * (2 * qcum_pair[:, nu, mu] - qtot_pair[:, nu, mu]), 0.0)
                res[:, OFF[3] + e, 2] += cc
        if mask[5]:
            mid = T if closing else start[:, k] + tau[:, k] + 0.5 * tau_p
            for m in range(3):
                res[:, OFF[5] + m, 2] += np.where(dep == m, Q * (mid - 0.5 * T), 0.0)
        qcum_dep[bidx, dep] += Q
        qcum_pair[bidx, dep, arr] += Q
