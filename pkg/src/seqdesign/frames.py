"""Frame matrices, pulse sequences and toggling-frame coefficient trajectories.

A pulse sequence is described by the list of toggling frames visited by the
quantization axis.  Each frame is one of the six signed Cartesian axes and
carries a free-evolution duration.  Consecutive frames are joined by a
transition whose rotation count is 0 (same axis, no pulse), 1 (orthogonal
axes, one pi/2 pulse) or 2 (antiparallel axes, a pi pulse, only allowed for
instantaneous pulses).  The cycle closes from the last frame back to the
first one.

Time layout of one cycle, with ``tau_p`` the length of one pi/2 pulse::

    [tau_1][pulse 1->2][tau_2] ... [tau_n][pulse n->1]
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Axis",
    "FrameError",
    "MalformedFileError",
    "AxisError",
    "AdjacencyError",
    "DurationError",
    "JunctionConflictError",
    "CycleError",
    "FrameMatrix",
    "PulseSequence",
    "Pulse",
    "parse_frame_matrix",
    "format_frame_matrix",
    "read_frame_matrix",
    "write_frame_matrix",
    "frames_from_pulses",
    "pulses_from_frames",
    "insert_pulse_frames",
    "apply_symmetrization",
    "TermKind",
    "Disorder",
    "Heisenberg",
    "Ising",
    "IsingCross",
    "all_kinds",
    "Segment",
    "CoefficientTrajectory",
    "coefficient_trajectory",
]


class Axis(IntEnum):
    """Signed Cartesian axis.  Labels 1-6 are +x, +y, +z, -x, -y, -z."""

    PX = 1
    PY = 2
    PZ = 3
    MX = 4
    MY = 5
    MZ = 6

    @property
    def index(self) -> int:
        """Cartesian component 0, 1 or 2."""
        return (int(self) - 1) % 3

    @property
    def sign(self) -> int:
        return 1 if int(self) <= 3 else -1

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(3, dtype=int)
        v[self.index] = self.sign
        return v

    def __neg__(self) -> "Axis":
        return Axis(int(self) + 3 if int(self) <= 3 else int(self) - 3)

    @property
    def label(self) -> str:
        return ("+" if self.sign > 0 else "-") + "xyz"[self.index]

    @classmethod
    def from_label(cls, text: str) -> "Axis":
        t = text.strip().lower()
        if len(t) == 1:
            t = "+" + t
        if len(t) != 2 or t[0] not in "+-" or t[1] not in "xyz":
            raise AxisError(f"not a unit axis: {text!r}")
        return cls("xyz".index(t[1]) + 1 + (0 if t[0] == "+" else 3))

    @classmethod
    def from_vector(cls, v: Sequence[int]) -> "Axis":
        nz = [i for i, x in enumerate(v) if x != 0]
        if len(nz) != 1 or abs(v[nz[0]]) != 1:
            raise AxisError(f"not a unit axis vector: {list(v)}")
        i = nz[0]
        return cls(i + 1 if v[i] > 0 else i + 4)

    def __str__(self) -> str:
        return self.label


class FrameError(ValueError):
    """Base class for invalid frame data."""


class MalformedFileError(FrameError):
    """Header or row count of a frame-matrix file is wrong."""


class AxisError(FrameError):
    """An axis entry is not one of the six signed unit axes."""


class AdjacencyError(FrameError):
    """Neighbouring frames violate the transition rules."""


class DurationError(FrameError):
    """A duration is negative or not finite."""


class JunctionConflictError(AdjacencyError):
    """Symmetrization would join two equal frames."""


class CycleError(FrameError):
    """A pulse list does not return the quantization axis to its start."""


def transition_rotations(a: Axis, b: Axis) -> int:
    """Number of pi/2 rotations needed to go from frame ``a`` to frame ``b``."""
    if a == b:
        return 0
    if a == -b:
        return 2
    return 1


@dataclass(frozen=True)
class FrameMatrix:
    """Ordered list of toggling frames with free-evolution durations.

    ``pulse_frames[k]`` marks frames that exist only as intermediate frames of
    a pulse (the delay is zero).  The flag is informational; all frames are
    treated the same way by the integrals.
    """

    axes: tuple[Axis, ...]
    taus: tuple[float, ...]
    pulse_frames: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(Axis(a) for a in self.axes))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "pulse_frames", tuple(bool(p) for p in self.pulse_frames))
        if not (len(self.axes) == len(self.taus) == len(self.pulse_frames)):
            raise MalformedFileError("axes, durations and flags must have equal length")
        for t in self.taus:
            if not math.isfinite(t) or t < 0:
                raise DurationError(f"free-evolution duration must be finite and >= 0, got {t}")

    def __len__(self) -> int:
        return len(self.axes)

    @property
    def F(self) -> np.ndarray:
        """Signed axis matrix of shape (3, n): column k is the frame vector."""
        out = np.zeros((3, len(self.axes)))
        for k, a in enumerate(self.axes):
            out[a.index, k] = a.sign
        return out

    def labels(self) -> list[str]:
        return [a.label for a in self.axes]


def _check_transitions(axes: Sequence[Axis], tau_p: float, allow_repeats: bool) -> None:
    n = len(axes)
    if n < 2:
        return
    for k in range(n):
        a, b = axes[k], axes[(k + 1) % n]
        r = transition_rotations(a, b)
        where = "closing transition" if k == n - 1 else f"frames {k + 1} and {k + 2}"
        if r == 0 and not allow_repeats:
            raise AdjacencyError(f"equal adjacent frames {a.label} at {where}")
        if r == 2 and tau_p > 0:
            raise AdjacencyError(
                f"antiparallel frames {a.label} -> {b.label} at {where} need an explicit "
                "intermediate frame when tau_p > 0"
            )


@dataclass(frozen=True)
class PulseSequence:
    """A cyclic frame matrix together with the pi/2-pulse duration."""

    frames: FrameMatrix
    tau_p: float = 0.0

    def __post_init__(self):
        tp = float(self.tau_p)
        if not math.isfinite(tp) or tp < 0:
            raise DurationError(f"tau_p must be finite and >= 0, got {self.tau_p}")
        object.__setattr__(self, "tau_p", tp)

    @classmethod
    def build(
        cls,
        axes: Iterable,
        taus: Iterable[float] | float = 1.0,
        tau_p: float = 0.0,
        pulse_frames: Iterable[bool] | None = None,
        allow_repeats: bool = False,
    ) -> "PulseSequence":
        """Construct and validate a sequence from axis labels or ``Axis`` values."""
        ax = tuple(a if isinstance(a, Axis) else (Axis.from_label(a) if isinstance(a, str) else Axis(a)) for a in axes)
        if isinstance(taus, (int, float)):
            taus = [float(taus)] * len(ax)
        taus = tuple(taus)
        if len(taus) != len(ax):
            raise MalformedFileError(f"{len(ax)} axes but {len(taus)} durations")
        pf = tuple(pulse_frames) if pulse_frames is not None else tuple(t == 0 for t in taus)
        fm = FrameMatrix(ax, taus, pf)
        seq = cls(fm, tau_p)
        seq.validate(allow_repeats=allow_repeats)
        return seq

    def validate(self, allow_repeats: bool = False) -> None:
        _check_transitions(self.frames.axes, self.tau_p, allow_repeats)

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def axes(self) -> tuple[Axis, ...]:
        return self.frames.axes

    @property
    def taus(self) -> np.ndarray:
        return np.array(self.frames.taus, dtype=float)

    @property
    def rotations(self) -> np.ndarray:
        """Rotation count of transition k (frame k -> k+1, last one closes the cycle)."""
        n = self.n
        if n < 2:
            return np.zeros(n, dtype=int)
        ax = self.frames.axes
        return np.array([transition_rotations(ax[k], ax[(k + 1) % n]) for k in range(n)], dtype=int)

    @property
    def T(self) -> float:
        """Cycle time."""
        return math.fsum(self.frames.taus) + self.tau_p * int(self.rotations.sum())

    def with_tau_p(self, tau_p: float) -> "PulseSequence":
        return PulseSequence(self.frames, tau_p)

    def scaled(self, factor: float) -> "PulseSequence":
        """All durations multiplied by ``factor``."""
        fm = FrameMatrix(self.frames.axes, [t * factor for t in self.frames.taus], self.frames.pulse_frames)
        return PulseSequence(fm, self.tau_p * factor)

    def __repr__(self) -> str:
        body = ",".join(f"{a.label}:{t:g}" for a, t in zip(self.frames.axes, self.frames.taus))
        return f"PulseSequence([{body}], tau_p={self.tau_p:g})"


# --------------------------------------------------------------------------
# file format


def parse_frame_matrix(text: str, allow_repeats: bool = False) -> PulseSequence:
    """Parse the plain-text frame-matrix format.

    The first non-comment line is ``frames <n> tau_p <seconds>``; it is followed
    by exactly ``n`` rows ``axis tau pulse_frame``.  ``#`` starts a comment.

    Raises
    ------
    MalformedFileError, AxisError, AdjacencyError, DurationError
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise MalformedFileError("empty frame-matrix file")
    lineno, head = rows[0]
    if len(head) != 4 or head[0] != "frames" or head[2] != "tau_p":
        raise MalformedFileError(f"line {lineno}: expected 'frames <n> tau_p <seconds>'")
    try:
        n = int(head[1])
        tau_p = float(head[3])
    except ValueError as exc:
        raise MalformedFileError(f"line {lineno}: bad header values") from exc
    if n < 0:
        raise MalformedFileError(f"line {lineno}: negative frame count")
    body = rows[1:]
    if len(body) != n:
        raise MalformedFileError(f"header declares {n} frames but {len(body)} rows follow")
    axes, taus, flags = [], [], []
    for lineno, tok in body:
        if len(tok) != 3:
            raise MalformedFileError(f"line {lineno}: expected 'axis tau pulse_frame'")
        try:
            axes.append(Axis.from_label(tok[0]))
        except AxisError as exc:
            raise AxisError(f"line {lineno}: {exc}") from None
        try:
            tau = float(tok[1])
        except ValueError:
            raise DurationError(f"line {lineno}: bad duration {tok[1]!r}") from None
        if not math.isfinite(tau) or tau < 0:
            raise DurationError(f"line {lineno}: duration must be >= 0, got {tok[1]}")
        taus.append(tau)
        if tok[2] not in ("0", "1"):
            raise MalformedFileError(f"line {lineno}: pulse_frame flag must be 0 or 1")
        flags.append(tok[2] == "1")
    if not math.isfinite(tau_p) or tau_p < 0:
        raise DurationError(f"tau_p must be >= 0, got {tau_p}")
    seq = PulseSequence(FrameMatrix(axes, taus, flags), tau_p)
    seq.validate(allow_repeats=allow_repeats)
    return seq


def format_frame_matrix(seq: PulseSequence, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"frames {seq.n} tau_p {seq.tau_p!r}")
    for a, t, p in zip(seq.frames.axes, seq.frames.taus, seq.frames.pulse_frames):
        lines.append(f"{a.label} {t!r} {int(p)}")
    return "\n".join(lines) + "\n"


def read_frame_matrix(path, allow_repeats: bool = False) -> PulseSequence:
    with open(path) as fh:
        return parse_frame_matrix(fh.read(), allow_repeats=allow_repeats)


def write_frame_matrix(path, seq: PulseSequence, comment: str | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(format_frame_matrix(seq, comment))


# --------------------------------------------------------------------------
# pulses <-> frames
#
# A pulse is a pi/2 rotation about a lab axis (+x, -x, +y, -y).  Its action on
# toggling-frame vectors is a signed permutation matrix M with
# P^dag (n.S) P = (M n).S.  After pulses P_1..P_k the frame vector is
# M_1 M_2 ... M_k z.


@dataclass(frozen=True)
class Pulse:
    axis: str  # "x" or "y"
    sign: int = 1

    def __post_init__(self):
        if self.axis not in ("x", "y") or self.sign not in (1, -1):
            raise ValueError(f"pulses are +-x or +-y, got {self.sign:+d}{self.axis}")

    @classmethod
    def from_label(cls, text: str) -> "Pulse":
        t = text.strip().lower()
        sign = -1 if t.startswith("-") else 1
        return cls(t.lstrip("+-"), sign)

    @property
    def label(self) -> str:
        return ("" if self.sign > 0 else "-") + self.axis.upper()

    @property
    def matrix(self) -> np.ndarray:
        if self.axis == "x":
            m = np.array([[1, 0, 0], [0, 0, 1], [0, -1, 0]])
        else:
            m = np.array([[0, 0, -1], [0, 1, 0], [1, 0, 0]])
        return m if self.sign > 0 else m.T


_PULSE_FOR_IMAGE = {  # M z -> pulse
    (0, 1, 0): Pulse("x", 1),
    (0, -1, 0): Pulse("x", -1),
    (-1, 0, 0): Pulse("y", 1),
    (1, 0, 0): Pulse("y", -1),
}


def _initial_rotation(first: Axis) -> np.ndarray:
    """Signed permutation taking +z to the first frame."""
    if first == Axis.PZ:
        return np.eye(3, dtype=int)
    if first == Axis.MZ:
        return Pulse("x").matrix @ Pulse("x").matrix
    for p in _PULSE_FOR_IMAGE.values():
        if Axis.from_vector(p.matrix @ np.array([0, 0, 1])) == first:
            return p.matrix
    raise AssertionError("unreachable")


def frames_from_pulses(pulses: Sequence, delays: Sequence[float]) -> FrameMatrix:
    """Toggling frames visited by a pulse train starting from +z.

    ``delays[k]`` precedes ``pulses[k]``.  The result has ``len(pulses) + 1``
    frames; the last one is the frame reached after the final pulse and has
    zero duration.  Frames with a zero delay are flagged as pulse frames.
    """
    pulses = [p if isinstance(p, Pulse) else Pulse.from_label(p) for p in pulses]
    if len(delays) != len(pulses):
        raise ValueError("one delay per pulse is required")
    G = np.eye(3, dtype=int)
    z = np.array([0, 0, 1])
    axes, taus, flags = [Axis.PZ], [], []
    for d, p in zip(delays, pulses):
        taus.append(float(d))
        flags.append(float(d) == 0.0)
        G = G @ p.matrix
        axes.append(Axis.from_vector(G @ z))
    taus.append(0.0)
    flags.append(False)
    return FrameMatrix(axes, taus, flags)


def pulses_from_frames(seq: PulseSequence, pi_axis: str = "x") -> tuple[list[Pulse], list[float]]:
    """Lab-frame pulse train realizing a frame sequence that starts at +z.

    Orthogonal transitions map to exactly one pi/2 pulse.  Antiparallel
    transitions become two pulses about ``pi_axis`` with zero delay between
    them; continuation transitions add their delay to the next pulse.  The
    closing transition is included, so the train returns to +z.
    """
    ax = seq.frames.axes
    if not ax:
        return [], []
    if ax[0] != Axis.PZ:
        raise CycleError("pulse reconstruction needs the first frame to be +z")
    G = np.eye(3, dtype=int)
    pulses: list[Pulse] = []
    delays: list[float] = []
    pending = 0.0
    n = len(ax)
    for k in range(n):
        pending += seq.frames.taus[k]
        target = ax[(k + 1) % n] if n > 1 else ax[0]
        r = transition_rotations(ax[k], target) if n > 1 else 0
        if r == 0:
            continue
        if r == 2:
            p = Pulse(pi_axis, 1)
            pulses += [p, p]
            delays += [pending, 0.0]
            G = G @ p.matrix @ p.matrix
        else:
            v = tuple(int(x) for x in G.T @ target.vector)
            p = _PULSE_FOR_IMAGE[v]
            pulses.append(p)
            delays.append(pending)
            G = G @ p.matrix
        pending = 0.0
    if pending:
        # trailing continuation: fold into the first delay
        if delays:
            delays[0] += pending
    return pulses, delays


def insert_pulse_frames(seq: PulseSequence, pi_axis: str = "x", tau_p: float | None = None) -> PulseSequence:
    """Replace every antiparallel transition with two pi/2 pulses.

    The intermediate frame is the one visited when the pi pulse is applied
    about the lab axis ``pi_axis``; it is inserted with zero duration and
    flagged as a pulse frame.  The returned sequence uses ``tau_p`` (default:
    the input value).
    """
    ax = seq.frames.axes
    n = len(ax)
    tau_p = seq.tau_p if tau_p is None else tau_p
    if n < 2:
        return PulseSequence(seq.frames, tau_p)
    G = _initial_rotation(ax[0])
    new_ax, new_t, new_f = [], [], []
    p = Pulse(pi_axis, 1)
    for k in range(n):
        new_ax.append(ax[k])
        new_t.append(seq.frames.taus[k])
        new_f.append(seq.frames.pulse_frames[k])
        target = ax[(k + 1) % n]
        r = transition_rotations(ax[k], target)
        if r == 2:
            G = G @ p.matrix
            new_ax.append(Axis.from_vector(G @ np.array([0, 0, 1])))
            new_t.append(0.0)
            new_f.append(True)
            G = G @ p.matrix
        elif r == 1:
            v = tuple(int(x) for x in G.T @ target.vector)
            G = G @ _PULSE_FOR_IMAGE[v].matrix
    out = PulseSequence(FrameMatrix(new_ax, new_t, new_f), tau_p)
    out.validate(allow_repeats=True)
    return out


def apply_symmetrization(seq: PulseSequence, mode: str, allow_repeats: bool = False) -> PulseSequence:
    """Append a reversed copy of the frame list.

    ``antisymmetric`` negates every frame of the reversed copy, ``mirror``
    keeps the signs.  Mirroring always joins two equal frames at the junction
    and at the cycle closure, which is only accepted with ``allow_repeats``.
    """
    fm = seq.frames
    if mode == "antisymmetric":
        tail = [-a for a in reversed(fm.axes)]
    elif mode == "mirror":
        tail = list(reversed(fm.axes))
    else:
        raise ValueError(f"unknown symmetrization mode {mode!r}")
    axes = list(fm.axes) + tail
    taus = list(fm.taus) + list(reversed(fm.taus))
    flags = list(fm.pulse_frames) + list(reversed(fm.pulse_frames))
    out = PulseSequence(FrameMatrix(axes, taus, flags), seq.tau_p)
    try:
        out.validate(allow_repeats=allow_repeats)
    except AdjacencyError as exc:
        if mode == "mirror" and not allow_repeats:
            raise JunctionConflictError(f"mirror symmetrization joins equal frames: {exc}") from None
        raise
    return out


# --------------------------------------------------------------------------
# term kinds and coefficient trajectories


@dataclass(frozen=True, order=True)
class TermKind:
    """Operator family of the toggling-frame Hamiltonian.

    ``family`` is one of ``"D"`` (disorder, linear in the frame vector),
    ``"H"`` (Heisenberg, frame independent), ``"I"`` (Ising, quadratic in one
    component) or ``"C"`` (Ising cross term between the departing and the
    arriving axis of a pulse).
    """

    family: str
    axes: tuple[int, ...] = field(default=())

    @property
    def label(self) -> str:
        ax = "".join("xyz"[a] for a in self.axes)
        return {"D": "Dis", "H": "Heis", "I": "Ising", "C": "Cross"}[self.family] + (f"({ax})" if ax else "")

    def __repr__(self) -> str:
        return self.label


def Disorder(mu: int) -> TermKind:
    return TermKind("D", (_axis_index(mu),))


def Heisenberg() -> TermKind:
    return TermKind("H", ())


def Ising(mu: int) -> TermKind:
    return TermKind("I", (_axis_index(mu),))


def IsingCross(nu: int, rho: int) -> TermKind:
    nu, rho = _axis_index(nu), _axis_index(rho)
    if nu == rho:
        raise ValueError("cross term needs two different axes")
    return TermKind("C", (nu, rho))


def _axis_index(mu) -> int:
    if isinstance(mu, str):
        return "xyz".index(mu.lower())
    mu = int(mu)
    if mu not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1 or 2, got {mu}")
    return mu


def all_kinds() -> list[TermKind]:
    """The 13 operator families of a secular two-body Hamiltonian."""
    out = [Disorder(m) for m in range(3)] + [Heisenberg()] + [Ising(m) for m in range(3)]
    out += [IsingCross(a, b) for a in range(3) for b in range(3) if a != b]
    return out


SHAPES = ("const", "sin", "cos", "sin2", "cos2", "sincos")


@dataclass(frozen=True)
class Segment:
    """One piece of a coefficient trajectory.

    Flat segments (``ramp=False``) are constant.  Ramp segments span one pulse
    window and follow ``amplitude * shape(theta)`` with theta running linearly
    from 0 to pi/2.
    """

    shape: str
    amplitude: float
    duration: float
    ramp: bool = False

    def values(self, s: np.ndarray) -> np.ndarray:
        """Coefficient at fractional positions ``s`` in [0, 1]."""
        th = 0.5 * np.pi * np.asarray(s, dtype=float)
        f = {
            "const": lambda x: np.ones_like(x),
            "sin": np.sin,
            "cos": np.cos,
            "sin2": lambda x: np.sin(x) ** 2,
            "cos2": lambda x: np.cos(x) ** 2,
            "sincos": lambda x: np.sin(x) * np.cos(x),
        }[self.shape]
        return self.amplitude * f(th)


def Flat(value: float, duration: float) -> Segment:
    return Segment("const", float(value), float(duration), False)


def Ramp(shape: str, amplitude: float, duration: float) -> Segment:
    if shape not in SHAPES:
        raise ValueError(f"unknown ramp shape {shape!r}")
    return Segment(shape, float(amplitude), float(duration), True)


@dataclass(frozen=True)
class CoefficientTrajectory:
    """Piecewise coefficient c_alpha(t) of one operator family over a cycle.

    Attributes
    ----------
    kind : TermKind
    segments : tuple of Segment
        Concatenated segments; durations sum to ``period``.
    tau_p : float
    closing_window : bool
        True when the last ``tau_p`` of the trajectory is the pulse that closes
        the cycle.
    frame_values, frame_taus, ramp_in, ramp_out : ndarray
        Per-frame flat value, free duration and ramp flags, used by the
        frame-lengthened second-order evaluation.
    """

    kind: TermKind
    segments: tuple[Segment, ...]
    tau_p: float
    period: float
    closing_window: bool = False
    frame_values: np.ndarray = field(default_factory=lambda: np.zeros(0), compare=False)
    frame_taus: np.ndarray = field(default_factory=lambda: np.zeros(0), compare=False)
    ramp_in: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool), compare=False)
    ramp_out: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool), compare=False)
    unrolled: bool = False

    def integral(self) -> float:
        return math.fsum(s.amplitude * s.duration * _MEAN[s.shape] for s in self.segments)

    def sample(self, t: np.ndarray) -> np.ndarray:
        """Pointwise values of the trajectory at times ``t`` in [0, period)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        start = 0.0
        for s in self.segments:
            if s.duration == 0:
                continue
            m = (t >= start) & (t < start + s.duration)
            out[m] = s.values((t[m] - start) / s.duration)
            start += s.duration
        return out

    def to_unrolled(self) -> "CoefficientTrajectory":
        """Trajectory with the closing pulse window split across the cycle ends.

        The ramp that belongs to the first frame (sin-type shapes, and the
        constant Heisenberg coefficient) is moved to the start of the cycle;
        the ramp-down of the last frame and the closing cross term stay at the
        end.  This is the timeline in which every frame block is contiguous,
        so the block decomposition needs no wrap-around correction.
        """
        if self.unrolled:
            return self
        if not self.closing_window or self.tau_p == 0:
            return _replace(self, unrolled=True)
        segs = list(self.segments)
        last = segs.pop()
        tp = self.tau_p
        if last.duration > tp * (1 + 1e-12):
            # merged flat segment (Heisenberg): split off the last window
            segs.append(Segment(last.shape, last.amplitude, last.duration - tp, last.ramp))
            last = Segment(last.shape, last.amplitude, tp, True)
        if last.shape in ("sin", "sin2", "const"):
            segs = [last] + segs + [Flat(0.0, tp)]
        else:
            segs = [Flat(0.0, tp)] + segs + [last]
        return _replace(self, segments=tuple(segs), period=self.period + tp, unrolled=True)


def _replace(traj: CoefficientTrajectory, **kw) -> CoefficientTrajectory:
    d = dict(
        kind=traj.kind,
        segments=traj.segments,
        tau_p=traj.tau_p,
        period=traj.period,
        closing_window=traj.closing_window,
        frame_values=traj.frame_values,
        frame_taus=traj.frame_taus,
        ramp_in=traj.ramp_in,
        ramp_out=traj.ramp_out,
        unrolled=traj.unrolled,
    )
    d.update(kw)
    return CoefficientTrajectory(**d)


# mean of each shape over theta in [0, pi/2]
_MEAN = {"const": 1.0, "sin": 2 / math.pi, "cos": 2 / math.pi, "sin2": 0.5, "cos2": 0.5, "sincos": 1 / math.pi}


def _frame_value(kind: TermKind, a: Axis) -> float:
    v = a.vector
    if kind.family == "D":
        return float(v[kind.axes[0]])
    if kind.family == "I":
        return float(abs(v[kind.axes[0]]))
    if kind.family == "H":
        return 1.0
    return 0.0


def _window_segment(kind: TermKind, a: Axis, b: Axis, tau_p: float) -> Segment:
    """Coefficient during the pi/2 pulse from frame ``a`` to frame ``b``."""
    va, vb = a.vector, b.vector
    if kind.family == "H":
        return Ramp("const", 1.0, tau_p)
    if kind.family == "C":
        nu, rho = kind.axes
        return Ramp("sincos", float(va[nu] * vb[rho]), tau_p)
    mu = kind.axes[0]
    if va[mu] != 0:
        amp = float(va[mu]) if kind.family == "D" else 1.0
        return Ramp("cos" if kind.family == "D" else "cos2", amp, tau_p)
    if vb[mu] != 0:
        amp = float(vb[mu]) if kind.family == "D" else 1.0
        return Ramp("sin" if kind.family == "D" else "sin2", amp, tau_p)
    return Ramp("const", 0.0, tau_p)


def coefficient_trajectory(seq: PulseSequence, kind: TermKind) -> CoefficientTrajectory:
    """Coefficient trajectory of one operator family over the actual cycle.

    During a pulse the frame vector is cos(theta) f_k + sin(theta) f_{k+1}.
    Disorder follows it linearly, Ising terms quadratically (cos^2, sin^2) and
    the cross term picks up sin(theta)cos(theta) F_{nu,k} F_{rho,k+1}.  The
    Heisenberg coefficient is 1 throughout and is returned as a single flat
    segment.

    Examples
    --------
    >>> seq = PulseSequence.build(["+z", "+x"], 1.0, tau_p=0.1)
    >>> [s.shape for s in coefficient_trajectory(seq, Disorder(2)).segments]
    ['const', 'cos', 'const', 'sin']
    """
    ax = seq.frames.axes
    n = len(ax)
    rot = seq.rotations
    tp = seq.tau_p
    taus = seq.frames.taus
    vals = np.array([_frame_value(kind, a) for a in ax])
    ramps = rot == 1 if tp > 0 else np.zeros(n, dtype=bool)
    ramp_in = np.roll(ramps, 1) if n else ramps
    closing = bool(n >= 2 and ramps[-1])
    T = seq.T
    if kind.family == "H":
        segs = (Flat(1.0, T),) if T > 0 else ()
    else:
        out = []
        for k in range(n):
            out.append(Flat(vals[k], taus[k]))
            if ramps[k]:
                out.append(_window_segment(kind, ax[k], ax[(k + 1) % n], tp))
        segs = tuple(out)
    return CoefficientTrajectory(
        kind=kind,
        segments=segs,
        tau_p=tp,
        period=T,
        closing_window=closing,
        frame_values=vals,
        frame_taus=np.array(taus, dtype=float),
        ramp_in=np.asarray(ramp_in, dtype=bool),
        ramp_out=np.asarray(ramps, dtype=bool),
    )
