"""Batch screening of candidate frame sequences against decoupling rules.

The kernel is the compiled extension when it imports, otherwise the numpy
implementation.  Set ``SEQDESIGN_BACKEND=numpy`` to force the fallback.
Both return identical residual tensors up to rounding; pass flags use the
same bound as :func:`seqdesign.rules.evaluate_ruleset`.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _screen_py
from .rules import RULE_IDS, RuleEntry, RuleReport, rule_order

__all__ = [
    "BACKEND",
    "ENTRY_AXES",
    "ENTRY_RULE",
    "ScreenResult",
    "available_backends",
    "encode",
    "residual_tensor",
    "screen_batch",
    "screen_sequences",
    "report_from_row",
]

ENTRY_RULE = _screen_py.ENTRY_RULE
ENTRY_AXES = tuple(_screen_py.ENTRY_AXES)
_ORDER = np.array([rule_order(int(r)) for r in ENTRY_RULE])

_BACKENDS = {"numpy": _screen_py}
try:
    from . import _screen_ext  # type: ignore[attr-defined]

    _BACKENDS["compiled"] = _screen_ext
except ImportError:  # pragma: no cover - depends on the build
    _screen_ext = None

_wanted = os.environ.get("SEQDESIGN_BACKEND", "")
if _wanted and _wanted not in _BACKENDS:
    raise ImportError(f"screening backend {_wanted!r} is not available (have {sorted(_BACKENDS)})")
BACKEND = _wanted or ("compiled" if "compiled" in _BACKENDS else "numpy")


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _kernel(backend: str | None):
    name = backend or BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}") from None


def _rules(rules) -> list[int]:
    out = sorted(set(int(r) for r in rules))
    for r in out:
        if r not in RULE_IDS:
            raise ValueError(f"unknown rule id {r}")
    return out


def encode(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Label and duration arrays of equal-length sequences."""
    seqs = list(seqs)
    if not seqs:
        return np.zeros((0, 0), dtype=np.int64), np.zeros((0, 0))
    L = seqs[0].n
    if any(s.n != L for s in seqs):
        raise ValueError("all sequences in a batch must have the same length")
    labels = np.array([[int(a) for a in s.axes] for s in seqs], dtype=np.int64)
    tau = np.array([list(s.taus) for s in seqs], dtype=float)
    return labels, tau


def residual_tensor(labels, tau, tau_p: float, rules=RULE_IDS, table_constants: bool = False, backend=None):
    """Residual tensor ``(B, 42, 3)``, cycle times and validity flags.

    Entries of unselected rows are zero.
    """
    labels = np.asarray(labels, dtype=np.int64)
    tau = np.asarray(tau, dtype=float)
    if labels.ndim != 2 or labels.shape != tau.shape:
        raise ValueError("labels and tau must be 2-D arrays of the same shape")
    if labels.size and (labels.min() < 1 or labels.max() > 6):
        raise ValueError("labels must be in 1..6")
    if tau_p < 0 or np.any(tau < 0):
        raise ValueError("durations must be non-negative")
    mask = _screen_py.rule_mask(_rules(rules))
    return _kernel(backend).residuals(labels, tau, float(tau_p), mask, bool(table_constants))


@dataclass(frozen=True)
class ScreenResult:
    passed: np.ndarray
    residual_norm: np.ndarray
    T: np.ndarray
    residuals: np.ndarray
    rules: tuple[int, ...]


def screen_batch(labels, tau, tau_p: float, rules=RULE_IDS, tolerance: float = 1e-9, table_constants: bool = False, backend=None) -> ScreenResult:
    """Pass flags and residual norms for a batch.

    A candidate passes when every component of every selected entry is at most
    ``tolerance * T**(order + 1)``.  Candidates with an antiparallel
    transition at ``tau_p > 0`` are not realizable; they fail with an
    infinite residual norm.
    """
    rules = _rules(rules)
    res, T, valid = residual_tensor(labels, tau, tau_p, rules, table_constants, backend)
    sel = np.isin(ENTRY_RULE, rules)
    bound = tolerance * T[:, None] ** (_ORDER[None, :] + 1)
    ok = np.all(np.abs(res) <= bound[:, :, None], axis=2) | ~sel[None, :]
    passed = valid & np.all(ok, axis=1)
    norm = np.sqrt(np.sum(res[:, sel, :] ** 2, axis=(1, 2)))
    norm = np.where(valid, norm, np.inf)
    return ScreenResult(passed, norm, T, res, tuple(rules))


def screen_sequences(seqs, rules=RULE_IDS, tolerance: float = 1e-9, table_constants: bool = False, backend=None) -> ScreenResult:
    """:func:`screen_batch` on a list of sequences sharing length and pulse length."""
    seqs = list(seqs)
    tps = {s.tau_p for s in seqs}
    if len(tps) > 1:
        raise ValueError("all sequences in a batch must share the pulse length")
    labels, tau = encode(seqs)
    return screen_batch(labels, tau, tps.pop() if tps else 0.0, rules, tolerance, table_constants, backend)


def report_from_row(result: ScreenResult, i: int, tolerance: float = 1e-9, table_constants: bool = False) -> RuleReport:
    """Rebuild a :class:`RuleReport` for candidate ``i`` of a screen result."""
    T = float(result.T[i])
    entries = []
    for j, (r, axes) in enumerate(zip(ENTRY_RULE, ENTRY_AXES)):
        if int(r) not in result.rules:
            continue
        main, pulse, q = (float(x) for x in result.residuals[i, j])
        bound = tolerance * T ** (rule_order(int(r)) + 1)
        ok = abs(main) <= bound and abs(pulse) <= bound and abs(q) <= bound
        entries.append(RuleEntry(int(r), axes, main, pulse, q, ok))
    return RuleReport(tuple(entries), float(tolerance), T, table_constants)
