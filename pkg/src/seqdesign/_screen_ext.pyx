# cython: language_level=3
"""Compiled batch rule evaluation.

Same contract as ``_screen_py.residuals``: one candidate at a time with
fixed-size running sums, so the cost is linear in the frame count.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport M_PI, fabs

cnp.import_array()

cdef int[6] PM = [0, 0, 1, 1, 2, 2]
cdef int[6] PV = [1, 2, 0, 2, 0, 1]
cdef int[3] IM = [0, 0, 1]
cdef int[3] IV = [1, 2, 2]

cdef int N_ENTRIES = 42
cdef int O1 = 6, O2 = 12, O3 = 18, O4 = 24, O5 = 27, O7 = 30


def residuals(labels, tau, double tau_p, mask, bint table_constants=False):
    cdef cnp.int64_t[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef double[:, ::1] tw = np.ascontiguousarray(tau, dtype=np.float64)
    cdef unsigned char[::1] mk = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t B = lab.shape[0], L = lab.shape[1]
    res_a = np.zeros((B, N_ENTRIES, 3))
    T_a = np.zeros(B)
    valid_a = np.ones(B, dtype=np.uint8)
    cdef double[:, :, ::1] res = res_a
    cdef double[::1] Tout = T_a
    cdef unsigned char[::1] valid = valid_a
    # per-candidate scratch
    ax_a = np.zeros(L, dtype=np.intc)
    rot_a = np.zeros(L, dtype=np.intc)
    sg_a = np.zeros(L)
    wD_a = np.zeros(L)
    wI_a = np.zeros(L)
    w7_a = np.zeros(L)
    st_a = np.zeros(L)
    cdef int[::1] ax = ax_a
    cdef int[::1] rot = rot_a
    cdef double[::1] sg = sg_a, wD = wD_a, wI = wI_a, w7 = w7_a, st = st_a
    cdef Py_ssize_t b
    with nogil:
        for b in range(B):
            _one(lab[b], tw[b], tau_p, mk, table_constants, res[b], &Tout[b], &valid[b],
                 ax, rot, sg, wD, wI, w7, st)
    return res_a, T_a, valid_a.astype(bool)


cdef inline double _fv(int[::1] ax, double[::1] sg, Py_ssize_t k, int m) noexcept nogil:
    return sg[k] if ax[k] == m else 0.0


cdef inline double _av(int[::1] ax, Py_ssize_t k, int m) noexcept nogil:
    return 1.0 if ax[k] == m else 0.0


cdef void _one(cnp.int64_t[::1] lab, double[::1] tau, double tau_p, unsigned char[::1] mk,
               bint tc, double[:, ::1] res, double* Tp, unsigned char* vp,
               int[::1] ax, int[::1] rot, double[::1] sg, double[::1] wD, double[::1] wI,
               double[::1] w7, double[::1] st) noexcept nogil:
    cdef Py_ssize_t L = lab.shape[0], k, k1
    cdef int e, m, v, r, d, a_, mu, nu
    cdef double T = 0.0, t, r2, nr, dt
    cdef double Fb[3]
    cdef double Ib[3]
    cdef double Flt[3]
    cdef double Ilt[3]
    cdef double s1[6]
    cdef double s2[6]
    cdef double s3[6]
    cdef double qtd[3]
    cdef double qcd[3]
    cdef double qtp[9]
    cdef double qcp[9]
    cdef double fw, iw, Q, amp, after, nextv, qd, qi, mid, Cv, Cr, c1, acc, slope, tot
    cdef bint ramp_k, ramp_prev, closing
    cdef long lk, ln
    vp[0] = 1
    for k in range(L):
        lk = lab[k]
        ax[k] = <int>((lk - 1) % 3)
        sg[k] = 1.0 if lk <= 3 else -1.0
    for k in range(L):
        if L < 2:
            rot[k] = 0
            continue
        lk = lab[k]
        ln = lab[(k + 1) % L]
        if ln == lk:
            rot[k] = 0
        elif ln - lk == 3 or lk - ln == 3:
            rot[k] = 2
            if tau_p > 0:
                vp[0] = 0
        else:
            rot[k] = 1
    for k in range(L):
        T += tau[k] + tau_p * rot[k]
    Tp[0] = T
    r2 = (2 * tau_p / M_PI) * (2 * tau_p / M_PI)
    for k in range(L):
        ramp_k = rot[k] == 1 and tau_p > 0
        ramp_prev = rot[(k + L - 1) % L] == 1 and tau_p > 0
        nr = (1.0 if ramp_k else 0.0) + (1.0 if ramp_prev else 0.0)
        wD[k] = tau[k] + (2 * tau_p / M_PI) * nr
        wI[k] = tau[k] + (tau_p / 2) * nr
        if tc:
            w7[k] = tau[k] + (tau_p / M_PI) * nr / 2
        else:
            w7[k] = wD[k]
    t = tau_p if (L > 0 and rot[L - 1] == 1 and tau_p > 0) else 0.0
    for k in range(L):
        st[k] = t
        t += tau[k] + tau_p * rot[k]
    for m in range(3):
        Fb[m] = 0.0
        Ib[m] = 0.0
    for k in range(L):
        Fb[ax[k]] += sg[k] * wD[k]
        Ib[ax[k]] += wI[k]

    if mk[0]:
        for m in range(3):
            res[m, 0] = Fb[m]
        for e in range(3):
            res[3 + e, 0] = Ib[IM[e]] - Ib[IV[e]]

    if mk[1] or mk[2] or mk[3]:
        for m in range(3):
            Flt[m] = 0.0
            Ilt[m] = 0.0
        for e in range(6):
            s1[e] = 0.0
            s2[e] = 0.0
            s3[e] = 0.0
        for k in range(L):
            a_ = ax[k]
            fw = sg[k] * wD[k]
            iw = wI[k]
            for e in range(6):
                if PM[e] != a_:
                    continue
                v = PV[e]
                s1[e] += fw * Flt[v]
                s2[e] += fw * Ilt[v]
                s3[e] += iw * (2 * Ilt[v] - Ib[v])
            Flt[a_] += fw
            Ilt[a_] += iw
        for e in range(6):
            m = PM[e]
            v = PV[e]
            if mk[1]:
                res[O1 + e, 0] = 2 * s1[e] - Fb[m] * Fb[v]
            if mk[2]:
                res[O2 + e, 0] = 2 * s2[e] - Fb[m] * Ib[v]
            if mk[3]:
                res[O3 + e, 0] = s3[e]
        if tau_p > 0:
            for k in range(L - 1):
                if rot[k] != 1:
                    continue
                for e in range(6):
                    m = PM[e]
                    v = PV[e]
                    if mk[1]:
                        res[O1 + e, 1] += (_fv(ax, sg, k, m) * _fv(ax, sg, k + 1, v)
                                           - _fv(ax, sg, k, v) * _fv(ax, sg, k + 1, m))
                    if mk[2]:
                        res[O2 + e, 1] += (_fv(ax, sg, k, m) * _av(ax, k + 1, v)
                                           - _av(ax, k, v) * _fv(ax, sg, k + 1, m))
                    if mk[3]:
                        res[O3 + e, 1] += (_av(ax, k, m) * _av(ax, k + 1, v)
                                           - _av(ax, k, v) * _av(ax, k + 1, m))
            for e in range(6):
                res[O1 + e, 1] *= r2 * (1 - M_PI / 4)
                res[O2 + e, 1] *= r2 * (M_PI / 4 - 2.0 / 3.0)
                res[O3 + e, 1] *= r2 * (M_PI * M_PI / 32 - 0.25)

    if mk[4] or mk[5]:
        for k in range(L):
            dt = st[k] + 0.5 * tau[k] - 0.5 * T
            if mk[4]:
                res[O4 + ax[k], 0] += sg[k] * wD[k] * dt
            if mk[5]:
                res[O5 + ax[k], 0] += (wD[k] if tc else wI[k]) * dt
        if L >= 2 and rot[L - 1] == 1 and tau_p > 0:
            # closing ramp-out counts at T, not at its center of mass
            if mk[4]:
                res[O4 + ax[L - 1], 0] -= sg[L - 1] * (2 / M_PI) * (1 - 2 / M_PI) * tau_p * tau_p
            if mk[5] and not tc:
                res[O5 + ax[L - 1], 0] -= 0.5 * (0.5 - 2 / (M_PI * M_PI)) * tau_p * tau_p

    if tau_p > 0 and (mk[2] or mk[3] or mk[5]):
        for m in range(3):
            qtd[m] = 0.0
            qcd[m] = 0.0
            Flt[m] = 0.0
            Ilt[m] = 0.0
        for m in range(9):
            qtp[m] = 0.0
            qcp[m] = 0.0
        for k in range(L):
            if rot[k] != 1:
                continue
            k1 = (k + 1) % L
            Q = sg[k] * sg[k1] * tau_p / M_PI
            qtd[ax[k]] += Q
            qtp[3 * ax[k] + ax[k1]] += Q
        for k in range(L):
            Flt[ax[k]] += sg[k] * wD[k]
            Ilt[ax[k]] += wI[k]
            if rot[k] != 1:
                continue
            closing = k == L - 1
            k1 = (k + 1) % L
            amp = sg[k] * sg[k1]
            Q = amp * tau_p / M_PI
            d = ax[k]
            a_ = ax[k1]
            for m in range(3):
                after = 0.0 if closing else Fb[m] - Flt[m]
                nextv = 0.0 if closing else _fv(ax, sg, k1, m)
                qd = 2 * Q * after + 2 * amp * r2 * (1.0 / 6.0) * (_fv(ax, sg, k, m) - nextv) - Fb[m] * Q
                after = 0.0 if closing else Ib[m] - Ilt[m]
                nextv = 0.0 if closing else _av(ax, k1, m)
                qi = 2 * Q * after + 2 * amp * r2 * (M_PI / 32) * (_av(ax, k, m) - nextv) - Ib[m] * Q
                for e in range(6):
                    mu = PM[e]
                    nu = PV[e]
                    if mk[2] and mu == m and d == nu:
                        res[O2 + e, 2] += qd
                    if mk[3]:
                        if mu == m and d == nu:
                            res[O3 + e, 2] += qi
                        if nu == m and d == mu:
                            res[O3 + e, 2] -= qi
            if mk[3]:
                for e in range(6):
                    mu = PM[e]
                    nu = PV[e]
                    if d != mu:
                        continue
                    res[O3 + e, 2] += Q * (2 * qcd[nu] - qtd[nu])
                    if a_ == nu:
                        res[O3 + e, 2] -= Q * (2 * qcp[3 * nu + mu] - qtp[3 * nu + mu])
            if mk[5]:
                mid = T if closing else st[k] + tau[k] + 0.5 * tau_p
                res[O5 + d, 2] += Q * (mid - 0.5 * T)
            qcd[d] += Q
            qcp[3 * d + a_] += Q

    if mk[7]:
        for e in range(12):
            # triples ordered as (v, r) over pairs, then m in (v, r)
            v = PM[e // 2]
            r = PV[e // 2]
            m = v if e % 2 == 0 else r
            Cv = 0.0
            Cr = 0.0
            c1 = 0.0
            acc = 0.0
            tot = 0.0
            for k in range(L):
                slope = _fv(ax, sg, k, v) * Cr - _fv(ax, sg, k, r) * Cv
                fw = _fv(ax, sg, k, m) * w7[k]
                acc += 2 * fw * c1 + fw * w7[k] * slope
                tot += fw
                c1 += slope * w7[k]
                Cv += _fv(ax, sg, k, v) * w7[k]
                Cr += _fv(ax, sg, k, r) * w7[k]
            res[O7 + e, 0] = acc - tot * c1
