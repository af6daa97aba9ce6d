"""Constrained enumeration, batch screening and ranking of frame sequences.

Candidates are label arrays (1-6 for +x,+y,+z,-x,-y,-z) with uniform free
duration.  Structural constraints are built into the generators, so every
emitted candidate satisfies them; screening runs the batch kernel of
:mod:`seqdesign.screening` over fixed-size blocks.

Random sampling is keyed by ``(seed, block index)`` on a Philox stream, so a
candidate's identity depends only on the seed and its position in the
stream, never on the worker count.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .frames import Axis, FrameError, PulseSequence, apply_symmetrization, insert_pulse_frames, format_frame_matrix
from .rules import RULE_IDS, RuleReport
from .screening import report_from_row, screen_batch

__all__ = [
    "BLOCK",
    "InfeasibleConstraintsError",
    "StructureConstraints",
    "SearchConfig",
    "Survivor",
    "SearchResult",
    "candidate_blocks",
    "enumerate_candidates",
    "screen",
    "rank_candidates",
    "run_search",
    "write_catalog",
    "read_catalog_index",
    "labels_to_sequence",
    "search_space_size",
]

BLOCK = 4096
_MAX_DRAW_ROUNDS = 200


class InfeasibleConstraintsError(ValueError):
    """The structural constraints admit no sequence."""


def _neg(lab):
    return np.where(lab > 3, lab - 3, lab + 3)


@dataclass(frozen=True)
class StructureConstraints:
    """Structural restrictions applied while generating candidates.

    Parameters
    ----------
    length : int
        Number of free-evolution frames.
    echo_pairing : bool
        Frames come in adjacent antiparallel pairs (2i, 2i+1).
    row_balance : bool
        Every axis holds the same number of frames.
    dipole_balance : bool
        Per axis, as many (+,-) as (-,+) echo pairs.  Requires ``echo_pairing``.
    first_frame : Axis or None
        Fixed first frame (``None`` leaves it free).

    Every frame differs from both of its cyclic neighbours.
    """

    length: int
    echo_pairing: bool = True
    row_balance: bool = False
    dipole_balance: bool = False
    first_frame: Axis | None = Axis.PZ

    def check(self) -> None:
        L = self.length
        if L < 2:
            raise InfeasibleConstraintsError(f"length {L} is too short for a cycle of distinct neighbours")
        if self.echo_pairing and L % 2:
            raise InfeasibleConstraintsError(f"echo pairing needs an even length, got {L}")
        if self.row_balance:
            unit = 6 if self.echo_pairing else 3
            if L % unit:
                raise InfeasibleConstraintsError(f"row balance needs length divisible by {unit}, got {L}")
        if self.dipole_balance:
            if not self.echo_pairing:
                raise InfeasibleConstraintsError("dipole balance is defined on echo pairs; enable echo_pairing")
            if self.row_balance and (L // 6) % 2:
                raise InfeasibleConstraintsError(
                    f"dipole balance with row balance needs an even number of pairs per axis, length {L} gives {L // 6}"
                )
            if not self.row_balance and (L // 2) % 2:
                raise InfeasibleConstraintsError(f"dipole balance needs an even number of echo pairs, length {L} gives {L // 2}")

    def admits(self, labels: Sequence[int]) -> bool:
        """Direct predicate check of a label sequence."""
        lab = [int(x) for x in labels]
        L = len(lab)
        if L != self.length or any(not 1 <= x <= 6 for x in lab):
            return False
        if self.first_frame is not None and lab[0] != int(self.first_frame):
            return False
        if any(lab[k] == lab[(k + 1) % L] for k in range(L)):
            return False
        neg = lambda x: x - 3 if x > 3 else x + 3
        if self.echo_pairing and any(lab[2 * i + 1] != neg(lab[2 * i]) for i in range(L // 2)):
            return False
        if self.row_balance:
            c = Counter((x - 1) % 3 for x in lab)
            if len({c[0], c[1], c[2]}) != 1:
                return False
        if self.dipole_balance:
            pos = Counter((lab[2 * i] - 1) % 3 for i in range(L // 2) if lab[2 * i] <= 3)
            negc = Counter((lab[2 * i] - 1) % 3 for i in range(L // 2) if lab[2 * i] > 3)
            if any(pos[a] != negc[a] for a in range(3)):
                return False
        return True


def search_space_size(c: StructureConstraints) -> int:
    """Number of admissible sequences (exact count by enumeration for small lengths)."""
    return sum(len(b) for _, b in candidate_blocks(SearchConfig(constraints=c, sampler="exhaustive")))


_CONFIG_KEYS = {
    "length": int,
    "echo_pairing": "bool",
    "row_balance": "bool",
    "dipole_balance": "bool",
    "first_frame": "axis",
    "rules": "ints",
    "tolerance": float,
    "sampler": str,
    "budget": int,
    "seed": int,
    "symmetrization": str,
    "rank_metric": str,
    "tau": float,
    "tau_p_ratio": float,
    "table_constants": "bool",
    "keep": int,
    "h": "floats",
    "J": float,
    "model": str,
    "lam": float,
}


@dataclass(frozen=True)
class SearchConfig:
    """Full description of a search run.

    ``sampler`` is ``exhaustive`` or ``random`` (``budget`` draws);
    ``symmetrization`` is ``none``, ``antisymmetric`` or ``mirror`` and is
    applied to each candidate before screening; ``rank_metric`` is
    ``residual-norm`` or ``simulated``.  ``h``, ``J``, ``model`` and ``lam``
    describe the Hamiltonian used by the simulated metric.
    """

    constraints: StructureConstraints
    rules: tuple[int, ...] = (0, 1, 2, 4)
    tolerance: float = 1e-9
    sampler: str = "random"
    budget: int = 10000
    seed: int = 0
    symmetrization: str = "none"
    rank_metric: str = "residual-norm"
    tau: float = 1.0
    tau_p_ratio: float = 0.0
    table_constants: bool = False
    keep: int = 20
    h: tuple[float, ...] = (2 * math.pi * 4e6, 0.0)
    J: float = 2 * math.pi * 35e3
    model: str = "dipolar"
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(sorted(set(int(r) for r in self.rules))))
        object.__setattr__(self, "h", tuple(float(x) for x in self.h))
        for r in self.rules:
            if r not in RULE_IDS:
                raise ValueError(f"unknown rule id {r}")
        if self.sampler not in ("exhaustive", "random"):
            raise ValueError(f"sampler must be exhaustive or random, got {self.sampler!r}")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.symmetrization not in ("none", "antisymmetric", "mirror"):
            raise ValueError(f"unknown symmetrization {self.symmetrization!r}")
        if self.rank_metric not in ("residual-norm", "simulated"):
            raise ValueError(f"unknown rank metric {self.rank_metric!r}")
        if self.tau <= 0 or self.tau_p_ratio < 0 or self.tolerance < 0 or self.keep < 1:
            raise ValueError("tau must be positive; tau_p_ratio, tolerance non-negative; keep at least 1")

    @property
    def tau_p(self) -> float:
        return self.tau_p_ratio * self.tau

    @classmethod
    def from_text(cls, text: str, **overrides) -> "SearchConfig":
        """Parse ``key = value`` lines (``#`` starts a comment)."""
        kv = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            kv[key] = _convert(_CONFIG_KEYS[key], val, lineno)
        kv.update({k: v for k, v in overrides.items() if v is not None})
        cons = {f.name: kv.pop(f.name) for f in fields(StructureConstraints) if f.name in kv}
        if "length" not in cons:
            raise ValueError("config needs a length")
        return cls(constraints=StructureConstraints(**cons), **kv)

    def to_text(self) -> str:
        c = self.constraints
        d = {f.name: getattr(c, f.name) for f in fields(c)}
        d.update({f.name: getattr(self, f.name) for f in fields(self) if f.name != "constraints"})
        out = []
        for k, v in d.items():
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, Axis):
                s = v.label
            elif v is None:
                s = "none"
            elif isinstance(v, tuple):
                s = ",".join(repr(x) for x in v)
            else:
                s = repr(v) if isinstance(v, float) else str(v)
            out.append(f"{k} = {s}")
        return "\n".join(out) + "\n"


def _convert(kind, val: str, lineno: int):
    try:
        if kind == "bool":
            low = val.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return low in ("true", "1", "yes")
        if kind == "axis":
            return None if val.lower() == "none" else Axis.from_label(val)
        if kind == "ints":
            return tuple(int(x) for x in val.replace(",", " ").split())
        if kind == "floats":
            return tuple(float(x) for x in val.replace(",", " ").split())
        return kind(val)
    except (ValueError, FrameError) as exc:
        raise ValueError(f"line {lineno}: bad value {val!r} ({exc})") from None


# --------------------------------------------------------------------------
# candidate generation


def _pair_counts(c: StructureConstraints):
    """Per-axis (pair or frame) quotas, or None when unconstrained."""
    units = c.length // 2 if c.echo_pairing else c.length
    return [units // 3] * 3 if c.row_balance else None


def _exhaustive(c: StructureConstraints) -> Iterator[tuple[int, ...]]:
    """Admissible label tuples in lexicographic order."""
    L = c.length
    quota = _pair_counts(c)
    neg = lambda x: x - 3 if x > 3 else x + 3
    units = L // 2 if c.echo_pairing else L
    per_axis = units // 3 if quota else None
    half = None
    if c.dipole_balance:
        half = [q // 2 for q in quota] if quota else None
    out = [0] * L
    used = [0, 0, 0]
    plus = [0, 0, 0]
    minus = [0, 0, 0]

    def dipole_ok_final():
        return all(plus[a] == minus[a] for a in range(3))

    def rec(u):
        if u == units:
            if out[L - 1] == out[0]:
                return
            if c.dipole_balance and not dipole_ok_final():
                return
            yield tuple(out)
            return
        for lab in range(1, 7):
            if u == 0 and c.first_frame is not None and lab != int(c.first_frame):
                continue
            a = (lab - 1) % 3
            if quota and used[a] >= per_axis:
                continue
            if c.echo_pairing:
                k = 2 * u
                if k > 0 and out[k - 1] == lab:
                    continue
                if c.dipole_balance:
                    if half is not None:
                        if lab <= 3 and plus[a] >= half[a]:
                            continue
                        if lab > 3 and minus[a] >= half[a]:
                            continue
                out[k], out[k + 1] = lab, neg(lab)
            else:
                if u > 0 and out[u - 1] == lab:
                    continue
                out[u] = lab
            used[a] += 1
            if lab <= 3:
                plus[a] += 1
            else:
                minus[a] += 1
            yield from rec(u + 1)
            used[a] -= 1
            if lab <= 3:
                plus[a] -= 1
            else:
                minus[a] -= 1

    yield from rec(0)


def _random_block(c: StructureConstraints, seed: int, block: int, size: int) -> np.ndarray:
    """``size`` uniform admissible candidates from the stream of ``(seed, block)``.

    Unconstrained parts are drawn uniformly (axis arrangements as uniform
    permutations of the quota multiset, echo signs as uniform balanced
    arrangements); the rest is enforced by rejection, which keeps the draw
    uniform over the admissible set.
    """
    bitgen = np.random.Philox(key=int(seed) % 2**128, counter=int(block) << 128)
    rng = np.random.Generator(bitgen)
    L = c.length
    units = L // 2 if c.echo_pairing else L
    quota = _pair_counts(c)
    fixed = c.first_frame
    got = []
    have = drawn = 0
    for _ in range(_MAX_DRAW_ROUNDS):
        # size the round from the acceptance rate seen so far
        rate = max(have, 1) / drawn if drawn else 0.5
        m = int(min(max(1.5 * (size - have) / rate, 64), 1 << 18))
        drawn += m
        if quota:
            pool = np.repeat(np.arange(3), quota[0])
            if fixed is not None:
                pool = np.delete(pool, np.nonzero(pool == fixed.index)[0][0])
            axes = rng.permuted(np.tile(pool, (m, 1)), axis=1)
            if fixed is not None:
                axes = np.concatenate([np.full((m, 1), fixed.index), axes], axis=1)
        else:
            axes = rng.integers(0, 3, (m, units))
            if fixed is not None:
                axes[:, 0] = fixed.index
        if c.dipole_balance and quota:
            sg = _balanced_signs(rng, axes, fixed)
        else:
            sg = rng.integers(0, 2, (m, units)) * 2 - 1
            if fixed is not None:
                sg[:, 0] = fixed.sign
        first = axes + 1 + np.where(sg < 0, 3, 0)
        if c.echo_pairing:
            lab = np.empty((m, L), dtype=np.int64)
            lab[:, 0::2] = first
            lab[:, 1::2] = _neg(first)
        else:
            lab = first.astype(np.int64)
        ok = np.all(lab != np.roll(lab, -1, axis=1), axis=1)
        if c.dipole_balance and not quota:
            for a in range(3):
                ok &= np.sum((axes == a) * sg, axis=1) == 0
        acc = lab[ok][: size - have]
        got.append(acc)
        have += len(acc)
        if have >= size:
            return np.concatenate(got)
    raise InfeasibleConstraintsError(
        f"rejection sampling found only {have} of {size} candidates; the constraints look infeasible"
    )


def _balanced_signs(rng, axes: np.ndarray, fixed: Axis | None) -> np.ndarray:
    """Uniform signs with equal +/- counts per axis within each row.

    Group sizes are even (checked by the constraints).  Inside each axis group
    a random ranking picks which half is positive; a fixed first pair takes
    rank 0 and its sign.
    """
    m, units = axes.shape
    keys = rng.random((m, units))
    if fixed is not None:
        keys[:, 0] = -1.0
    sg = np.zeros((m, units), dtype=np.int64)
    for a in range(3):
        sel = axes == a
        half = sel.sum(axis=1, keepdims=True) // 2
        rank = np.argsort(np.argsort(np.where(sel, keys, np.inf), axis=1), axis=1)
        lead = 1 if fixed is None or a != fixed.index else fixed.sign
        sg = np.where(sel, np.where(rank < half, lead, -lead), sg)
    return sg


def candidate_blocks(config: SearchConfig) -> Iterator[tuple[int, np.ndarray]]:
    """Blocks ``(first index, labels)`` of the candidate stream."""
    c = config.constraints
    c.check()
    if config.sampler == "exhaustive":
        buf, start, idx = [], 0, 0
        for lab in _exhaustive(c):
            buf.append(lab)
            idx += 1
            if len(buf) == BLOCK:
                yield start, np.array(buf, dtype=np.int64)
                start, buf = idx, []
        if buf:
            yield start, np.array(buf, dtype=np.int64)
        elif idx == 0:
            raise InfeasibleConstraintsError("the constraints admit no sequence")
        return
    nblocks = -(-config.budget // BLOCK)
    for b in range(nblocks):
        size = min(BLOCK, config.budget - b * BLOCK)
        yield b * BLOCK, _random_block(c, config.seed, b, size)


def labels_to_sequence(labels, tau: float, tau_p: float = 0.0, allow_repeats: bool = False) -> PulseSequence:
    axes = [Axis(int(x)) for x in labels]
    return PulseSequence.build(axes, [tau] * len(axes), tau_p, allow_repeats=allow_repeats)


def _prepare(config: SearchConfig, labels) -> PulseSequence:
    """Candidate as screened: symmetrized, with pulse frames when tau_p > 0."""
    repeats = config.symmetrization == "mirror"
    seq = labels_to_sequence(labels, config.tau, 0.0, allow_repeats=True)
    if config.symmetrization != "none":
        seq = apply_symmetrization(seq, config.symmetrization, allow_repeats=repeats)
    if config.tau_p > 0:
        seq = insert_pulse_frames(seq, tau_p=config.tau_p)
    else:
        seq.validate(allow_repeats=repeats)
    return seq


def enumerate_candidates(config: SearchConfig) -> Iterator[PulseSequence]:
    """Stream of candidate sequences (as screened) in stream order."""
    for _, block in candidate_blocks(config):
        for lab in block:
            yield _prepare(config, lab)


# --------------------------------------------------------------------------
# screening and ranking


@dataclass(frozen=True)
class Survivor:
    index: int
    labels: tuple[int, ...]
    sequence: PulseSequence
    report: RuleReport
    metric: float = float("nan")

    @property
    def residual_norm(self) -> float:
        return self.report.residual_norm()

    @property
    def key(self) -> str:
        return "".join(Axis(int(x)).label.replace("+", "p").replace("-", "m") for x in self.labels)


def _screen_block(config: SearchConfig, start: int, labels: np.ndarray, backend=None):
    """Survivors of one block as (index, base labels, screened sequence, report)."""
    if config.symmetrization == "none" and config.tau_p == 0:
        tau = np.full(labels.shape, config.tau)
        res = screen_batch(labels, tau, 0.0, config.rules, config.tolerance, config.table_constants, backend)
        out = []
        for i in np.nonzero(res.passed)[0]:
            seq = labels_to_sequence(labels[i], config.tau)
            rep = report_from_row(res, int(i), config.tolerance, config.table_constants)
            out.append((start + int(i), tuple(int(x) for x in labels[i]), seq, rep))
        return out
    seqs = [_prepare(config, lab) for lab in labels]
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        groups.setdefault(s.n, []).append(i)
    out = []
    for n, idx in groups.items():
        lab = np.array([[int(a) for a in seqs[i].axes] for i in idx], dtype=np.int64)
        tau = np.array([seqs[i].taus for i in idx])
        res = screen_batch(lab, tau, config.tau_p, config.rules, config.tolerance, config.table_constants, backend)
        for j in np.nonzero(res.passed)[0]:
            i = idx[int(j)]
            rep = report_from_row(res, int(j), config.tolerance, config.table_constants)
            out.append((start + i, tuple(int(x) for x in labels[i]), seqs[i], rep))
    out.sort(key=lambda t: t[0])
    return out


def screen(candidates, ruleset=(0, 1, 2, 4), tolerance: float = 1e-9, table_constants: bool = False, backend=None):
    """Passing ``(sequence, report)`` pairs, in input order.

    Sequences are grouped by frame count and pulse length and screened in
    batches; the reports equal :func:`evaluate_ruleset` per candidate.
    """
    from .screening import encode

    seqs = list(candidates)
    groups: dict[tuple, list[int]] = {}
    for i, s in enumerate(seqs):
        groups.setdefault((s.n, s.tau_p), []).append(i)
    keep = []
    for (n, tp), idx in groups.items():
        lab, tau = encode([seqs[i] for i in idx])
        res = screen_batch(lab, tau, tp, ruleset, tolerance, table_constants, backend)
        for j in np.nonzero(res.passed)[0]:
            keep.append((idx[int(j)], report_from_row(res, int(j), tolerance, table_constants)))
    keep.sort(key=lambda t: t[0])
    return [(seqs[i], rep) for i, rep in keep]


def _simulated_metric(seq: PulseSequence, params) -> float:
    from .simulate import effective_error

    return effective_error(seq, params)


def rank_candidates(survivors, hamiltonian=None, metric: str = "residual-norm"):
    """Order survivors by metric, ties broken by lexicographic label encoding.

    ``survivors`` holds :class:`Survivor` objects or ``(sequence, report)``
    pairs; the ranked list has the same element type, with metrics attached
    to survivors.
    """
    items = list(survivors)
    if not items:
        return []
    wrap = not isinstance(items[0], Survivor)
    if wrap:
        items = [
            Survivor(i, tuple(int(a) for a in s.axes), s, r) for i, (s, r) in enumerate(items)
        ]
    if metric == "residual-norm":
        scored = [replace(s, metric=s.residual_norm) for s in items]
    elif metric == "simulated":
        if hamiltonian is None:
            raise ValueError("the simulated metric needs Hamiltonian parameters")
        scored = [replace(s, metric=_simulated_metric(s.sequence, hamiltonian)) for s in items]
    else:
        raise ValueError(f"unknown metric {metric!r}")
    scored.sort(key=lambda s: (s.metric, s.labels, s.index))
    if wrap:
        return [(s.sequence, s.report) for s in scored]
    return scored


@dataclass(frozen=True)
class SearchResult:
    config: SearchConfig
    n_candidates: int
    survivors: tuple[Survivor, ...]
    ranked: tuple[Survivor, ...] = field(default=())


def run_search(config: SearchConfig, threads: int = 1, backend=None, hamiltonian=None) -> SearchResult:
    """Enumerate, screen and rank.

    Blocks are screened on a pool of ``threads`` workers and merged by
    candidate index, so the output does not depend on the worker count.
    Duplicate draws of the same sequence keep their first index.
    """
    if threads < 1:
        raise ValueError("threads must be at least 1")
    total = 0
    found = []
    blocks = candidate_blocks(config)
    if threads == 1:
        for start, lab in blocks:
            total += len(lab)
            found.extend(_screen_block(config, start, lab, backend))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = []
            for start, lab in blocks:
                total += len(lab)
                futs.append(pool.submit(_screen_block, config, start, lab, backend))
            for f in futs:
                found.extend(f.result())
    found.sort(key=lambda t: t[0])
    seen = set()
    survivors = []
    for idx, lab, seq, rep in found:
        if lab in seen:
            continue
        seen.add(lab)
        survivors.append(Survivor(idx, lab, seq, rep))
    if config.rank_metric == "simulated" and hamiltonian is None:
        from .operators import HamiltonianParams

        hamiltonian = HamiltonianParams(config.h, config.J, config.model, config.lam)
    pre = rank_candidates(survivors, metric="residual-norm")
    if config.rank_metric == "simulated":
        # simulate only the best residual-norm survivors
        ranked = rank_candidates(pre[: config.keep], hamiltonian, "simulated")
    else:
        ranked = pre[: config.keep]
    return SearchResult(config, total, tuple(survivors), tuple(ranked))


# --------------------------------------------------------------------------
# catalog


def write_catalog(result: SearchResult, outdir) -> Path:
    """Frame-matrix file per ranked survivor plus ``index.csv``.

    The index has the header ``rank,id,metric,residual_norm``; ``id`` is the
    candidate's position in the stream, frame files are ``<id>.frames``.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["rank,id,metric,residual_norm"]
    for rank, s in enumerate(result.ranked, 1):
        name = f"{s.index:08d}.frames"
        comment = f"candidate {s.index} rules {','.join(map(str, result.config.rules))} metric {s.metric!r}"
        (out / name).write_text(format_frame_matrix(s.sequence, comment))
        lines.append(f"{rank},{s.index},{s.metric!r},{s.residual_norm!r}")
    (out / "index.csv").write_text("\n".join(lines) + "\n")
    (out / "search.conf").write_text(result.config.to_text())
    return out


def read_catalog_index(path) -> list[tuple[int, int, float, float]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "rank,id,metric,residual_norm":
        raise ValueError("not a catalog index (missing header)")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        r, i, m, n = line.split(",")
        out.append((int(r), int(i), float(m), float(n)))
    return out
