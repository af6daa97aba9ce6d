"""Test-side reference integrals built straight from frame vectors.

Nothing here uses the library's coefficient trajectories or closed forms.
The toggling-frame vector during the pulse from frame k to k+1 is
cos(theta) f_k + sin(theta) f_{k+1}; every coefficient is sampled from that
path and integrated with composite midpoint sums.
"""
import numpy as np

KINDS = (
    [("D", (m,)) for m in range(3)]
    + [("H", ())]
    + [("I", (m,)) for m in range(3)]
    + [("C", (a, b)) for a in range(3) for b in range(3) if a != b]
)


def _vec(label):
    v = np.zeros(3)
    v[(label - 1) % 3] = 1.0 if label <= 3 else -1.0
    return v


def _coeffs(f_dep, f_arr, theta, part):
    """Coefficient rows (13, m) on a pulse window.

    ``part`` selects the whole window ("both"), only the arriving-frame
    pieces ("arrive") or only the departing-frame pieces ("depart").
    """
    c, s = np.cos(theta), np.sin(theta)
    dep = f_dep[:, None] * c if part != "arrive" else np.zeros((3, len(theta)))
    arr = f_arr[:, None] * s if part != "depart" else np.zeros((3, len(theta)))
    f = dep + arr
    rows = []
    for fam, ax in KINDS:
        if fam == "D":
            rows.append(f[ax[0]])
        elif fam == "I":
            rows.append(dep[ax[0]] ** 2 + arr[ax[0]] ** 2)
        elif fam == "H":
            rows.append(np.full(len(theta), 0.0 if part == "depart" else 1.0))
        else:
            a, b = ax
            w = f_dep[a] * f_arr[b] if part != "arrive" else 0.0
            rows.append(s * c * w)
    return np.array(rows)


def _flat(f, dur):
    rows = []
    for fam, ax in KINDS:
        if fam == "D":
            rows.append(f[ax[0]])
        elif fam == "I":
            rows.append(f[ax[0]] ** 2)
        elif fam == "H":
            rows.append(1.0)
        else:
            rows.append(0.0)
    return np.array(rows)[:, None], np.array([dur])


def sample_cycle(labels, taus, tau_p, unrolled=False, cells=400):
    """Cell widths (N,) and coefficient samples (13, N) over one cycle.

    With ``unrolled`` the closing pulse is split: its arriving half (and the
    Heisenberg coefficient) opens the timeline, its departing half closes it.
    """
    n = len(labels)
    F = [_vec(l) for l in labels]
    rot = []
    for k in range(n):
        a, b = labels[k], labels[(k + 1) % n]
        rot.append(0 if a == b else (2 if abs(a - b) == 3 else 1))
    theta = (np.arange(cells) + 0.5) * (0.5 * np.pi / cells)
    hw = np.full(cells, tau_p / cells)
    blocks, widths = [], []
    closing = tau_p > 0 and n >= 2 and rot[-1] == 1
    if unrolled and closing:
        blocks.append(_coeffs(F[-1], F[0], theta, "arrive"))
        widths.append(hw)
    for k in range(n):
        c, w = _flat(F[k], taus[k])
        blocks.append(c)
        widths.append(w)
        if tau_p > 0 and rot[k] == 1:
            last = k == n - 1
            part = "depart" if (unrolled and last) else "both"
            blocks.append(_coeffs(F[k], F[(k + 1) % n], theta, part))
            widths.append(hw)
    return np.concatenate(widths), np.concatenate(blocks, axis=1)


def ordered_matrix(h, C):
    """A[a, b] = int c_a(t1) int_0^t1 c_b(t2) for all kind pairs."""
    cum = np.cumsum(C * h, axis=1)
    left = cum - C * h
    return (C * h) @ (left + 0.5 * h * C).T


def first_order_matrix(labels, taus, tau_p, unrolled=False, cells=400):
    h, C = sample_cycle(labels, taus, tau_p, unrolled, cells)
    A = ordered_matrix(h, C)
    return A - A.T


def second_order_disorder(labels, taus, a, b, c, cells=16):
    """2 int c_a c1_bc dt - c1_bc(T) int c_a for ideal pulses.

    c1_bc(t) is the antisymmetrized first-order integral up to t, obtained by
    fine midpoint accumulation of its rate c_b C_c - c_c C_b.
    """
    F = np.array([_vec(l) for l in labels]).T
    h = np.repeat(np.asarray(taus, float) / cells, cells)
    f = np.repeat(F, cells, axis=1)
    Cum = np.cumsum(f * h, axis=1)
    Cmid = Cum - 0.5 * f * h
    rate = f[b] * Cmid[c] - f[c] * Cmid[b]
    c1_right = np.cumsum(rate * h)
    c1_mid = c1_right - 0.5 * rate * h
    return 2 * np.sum(f[a] * h * c1_mid) - c1_right[-1] * np.sum(f[a] * h)


def random_labels(rng, n, tau_p):
    """Random cyclic labels without equal neighbours (and no antiparallel ones when tau_p > 0)."""
    while True:
        lab = [int(rng.integers(1, 7))]
        for _ in range(n - 1):
            prev = lab[-1]
            choices = [x for x in range(1, 7) if x != prev and (tau_p == 0 or abs(x - prev) != 3)]
            lab.append(int(rng.choice(choices)))
        a, b = lab[-1], lab[0]
        if n < 2 or (a != b and (tau_p == 0 or abs(a - b) != 3)):
            return lab
