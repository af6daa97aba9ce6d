"""Command-line front end.

Subcommands: validate, rules, screen, simulate, scaling, selection-check.
Exit status 0 on success, 1 on a domain error (bad file, infeasible search,
branch-cut violation, failed verification), 2 on a usage error.  Diagnostics
go to standard error.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .frames import FrameError, PulseSequence, insert_pulse_frames, read_frame_matrix
from .operators import HamiltonianParams
from .rules import RULE_IDS, engine_ruleset, evaluate_ruleset, format_report, zeroth_rules

__all__ = ["main", "build_parser"]


class DomainError(Exception):
    pass


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p, tolerance=True):
    p.add_argument("--allow-repeats", action="store_true", help="accept equal adjacent frames")
    p.add_argument("--tau-p-ratio", type=float, default=None, help="pulse length as a fraction of the mean free duration")
    if tolerance:
        p.add_argument("--tolerance", type=float, default=1e-9, help="relative rule tolerance (bound = tol * T^(order+1))")


def _hamiltonian_args(p):
    p.add_argument("--h", type=_floats, default=(2 * math.pi * 4e6, 0.0), help="disorder per spin (rad/s)")
    p.add_argument("--J", type=float, default=2 * math.pi * 35e3, help="coupling between every pair (rad/s)")
    p.add_argument("--model", choices=("dipolar", "xxz"), default="dipolar")
    p.add_argument("--lam", type=float, default=0.0, help="XXZ anisotropy")
    p.add_argument("--period", type=float, default=None, help="rescale durations to this cycle time (s)")
    p.add_argument("--method", choices=("lab", "toggling"), default="lab")
    p.add_argument("--steps", type=int, default=64, help="sub-steps per pulse window")
    p.add_argument("--ideal-pulses", action="store_true", help="instantaneous pulses (ignore tau_p)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqdesign", description="Frame-sequence design tools.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a frame-matrix file and report its invariants")
    p.add_argument("file")
    _common(p, tolerance=False)

    p = sub.add_parser("rules", help="evaluate decoupling rules on a frame-matrix file")
    p.add_argument("file")
    p.add_argument("--rules", type=_ints, default=RULE_IDS, help="rule rows, e.g. 0,1,2,4")
    p.add_argument("--table-constants", action="store_true", help="tabulated frame-lengthening constants for rows 5 and 7")
    p.add_argument("--exact-boundary", action="store_true", help="report engine totals over the literal cycle")
    p.add_argument("-o", "--output", default=None)
    _common(p)

    p = sub.add_parser("screen", help="enumerate, screen and rank candidates; write a catalog")
    p.add_argument("--config", required=True, help="key = value search configuration")
    p.add_argument("--out", required=True, help="catalog directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--tau-p-ratio", type=float, default=None)
    p.add_argument("--table-constants", action="store_true")
    p.add_argument("--backend", choices=("compiled", "numpy"), default=None)

    p = sub.add_parser("simulate", help="extract the effective Hamiltonian of a sequence")
    p.add_argument("file")
    p.add_argument("--target", choices=("none", "zeroth", "first", "heisenberg"), default="none")
    p.add_argument("--exact-boundary", action="store_true", help="literal-cycle first-order target")
    p.add_argument("--threshold", type=float, default=0.0, help="omit coefficients at or below this magnitude")
    p.add_argument("-o", "--output", default=None)
    _hamiltonian_args(p)
    _common(p, tolerance=False)

    p = sub.add_parser("scaling", help="power-law fit of one effective-Hamiltonian component")
    p.add_argument("file")
    p.add_argument("--parameter", choices=("h", "J"), required=True)
    p.add_argument("--values", type=_floats, required=True, help="swept values (rad/s)")
    p.add_argument("--component", default="XZ")
    p.add_argument("--target", choices=("none", "zeroth", "heisenberg"), default="heisenberg")
    p.add_argument("-o", "--output", default=None)
    _hamiltonian_args(p)
    _common(p, tolerance=False)

    p = sub.add_parser("selection-check", help="verify the two-qubit commutator selection rules")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-12)
    return ap


def _load(args) -> PulseSequence:
    seq = read_frame_matrix(args.file, allow_repeats=args.allow_repeats)
    if getattr(args, "tau_p_ratio", None) is not None:
        if args.tau_p_ratio < 0:
            raise DomainError("--tau-p-ratio must be non-negative")
        free = [t for t in seq.taus if t > 0]
        tp = args.tau_p_ratio * (sum(free) / len(free) if free else 0.0)
        if tp > 0:
            seq = insert_pulse_frames(seq, tau_p=tp)
        else:
            seq = seq.with_tau_p(0.0)
    return seq


def _emit(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _params(args) -> HamiltonianParams:
    return HamiltonianParams(args.h, args.J, args.model, args.lam)


def _scaled(seq, args):
    if args.period is not None:
        if args.period <= 0:
            raise DomainError("--period must be positive")
        seq = seq.scaled(args.period / seq.T)
    return seq


def _cmd_validate(args) -> int:
    seq = _load(args)
    rot = seq.rotations
    z = zeroth_rules(seq)
    lines = [
        f"frames={seq.n}",
        f"pulse_frames={sum(seq.frames.pulse_frames)}",
        f"T={seq.T!r}",
        f"tau_p={seq.tau_p!r}",
        f"pi2_pulses={int(np.sum(rot == 1))} pi_pulses={int(np.sum(rot == 2))} continuations={int(np.sum(rot == 0))}",
        "disorder_sums=" + ",".join(repr(float(x)) for x in z["disorder"]),
        f"max_ising_imbalance={float(z['max_imbalance'])!r}",
        "status=valid",
    ]
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _cmd_rules(args) -> int:
    seq = _load(args)
    if args.exact_boundary:
        if args.table_constants:
            raise DomainError("--exact-boundary reports engine totals; --table-constants does not apply")
        rep = engine_ruleset(seq, args.rules, args.tolerance, exact_boundary=True)
    else:
        rep = evaluate_ruleset(seq, args.rules, args.tolerance, args.table_constants)
    _emit(format_report(rep), args.output)
    return 0


def _cmd_screen(args) -> int:
    from .search import SearchConfig, run_search, write_catalog

    text = Path(args.config).read_text()
    cfg = SearchConfig.from_text(
        text,
        seed=args.seed,
        budget=args.budget,
        tolerance=args.tolerance,
        tau_p_ratio=args.tau_p_ratio,
        table_constants=True if args.table_constants else None,
    )
    res = run_search(cfg, threads=args.threads, backend=args.backend)
    write_catalog(res, args.out)
    print(f"candidates={res.n_candidates} survivors={len(res.survivors)} written={len(res.ranked)}", file=sys.stderr)
    return 0


def _cmd_simulate(args) -> int:
    from .simulate import effective_hamiltonian

    seq = _scaled(_load(args), args)
    target = None if args.target == "none" else args.target
    eff = effective_hamiltonian(
        seq, _params(args), target, exact_boundary=args.exact_boundary,
        finite_pulses=not args.ideal_pulses, steps=args.steps, method=args.method,
    )
    _emit(eff.dump(args.threshold), args.output)
    return 0


def _cmd_scaling(args) -> int:
    from .simulate import error_scaling_fit, format_sweep

    seq = _scaled(_load(args), args)
    target = None if args.target == "none" else args.target
    fit = error_scaling_fit(
        seq, _params(args), args.parameter, args.values, args.component, target,
        finite_pulses=not args.ideal_pulses, steps=args.steps, method=args.method,
    )
    _emit(format_sweep(fit), args.output)
    return 0


def _cmd_selection(args) -> int:
    from .simulate import format_selection_report, verify_selection_rules

    rep = verify_selection_rules(args.trials, args.seed, args.tolerance)
    sys.stdout.write(format_selection_report(rep))
    if not rep.passed:
        print("selection rules violated", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "rules": _cmd_rules,
    "screen": _cmd_screen,
    "simulate": _cmd_simulate,
    "scaling": _cmd_scaling,
    "selection-check": _cmd_selection,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return _COMMANDS[args.command](args)
    except (FrameError, DomainError, ValueError, OSError) as exc:
        print(f"seqdesign {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
