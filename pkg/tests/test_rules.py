import math

import numpy as np
import pytest
from hypothesis import given

from conftest import sequences
from seqdesign.frames import Axis, Disorder, Heisenberg, PulseSequence, coefficient_trajectory
from seqdesign.magnus import brute_force_integral
from seqdesign.rules import (
    C_DIS_DIS,
    PAIRS,
    RULE_IDS,
    engine_ruleset,
    evaluate_ruleset,
    format_report,
    parse_report,
    rule_order,
    rule_row1_disorder_disorder,
    zeroth_rules,
)


def _total(e):
    return e.main + 2 * e.pulse + e.q if e.rule in (1, 2, 3) else e.main + e.q


def test_two_frame_example():
    seq = PulseSequence.build(["+z", "+x"], 1.0)
    rep = evaluate_ruleset(seq)
    assert rep.get(1, "xz").main == 1.0
    assert rep.get(1, "zx").main == -1.0
    assert rep.get(3, "zx").main == -1.0
    assert rep.get(5, "z").main == -0.5
    assert not rep.passed


def test_echo_dipole_residual():
    seq = PulseSequence.build(["+z", "-z"], 1.0)
    rep = evaluate_ruleset(seq, (0, 4))
    assert rep.get(4, "z").main == -1.0
    assert rep.get(0, "z").main == 0.0 and rep.get(0, "z").passed
    tz = coefficient_trajectory(seq, Disorder(2))
    th = coefficient_trajectory(seq, Heisenberg())
    half_v = 0.5 * (brute_force_integral((tz, th), 1, 1000) - brute_force_integral((th, tz), 1, 1000))
    assert half_v == pytest.approx(-1.0, abs=1e-5)


def test_wahuha_zeroth_sums():
    tau = 0.5
    seq = PulseSequence.build(["+z", "+y", "+x", "+x", "+y", "+z"], tau, allow_repeats=True)
    z = zeroth_rules(seq)
    assert z["ising"] == pytest.approx([2 * tau] * 3)
    assert z["disorder"] == pytest.approx([2 * tau] * 3)
    assert z["max_imbalance"] == 0.0


def test_row_ids_and_orders():
    assert RULE_IDS == (0, 1, 2, 3, 4, 5, 6, 7)
    assert [rule_order(r) for r in RULE_IDS] == [0, 1, 1, 1, 1, 1, 1, 2]
    seq = PulseSequence.build(["+z", "+x"], 1.0)
    assert evaluate_ruleset(seq, (6,)).entries == ()
    counts = {r: len(evaluate_ruleset(seq, (r,)).entries) for r in RULE_IDS}
    assert counts == {0: 6, 1: 6, 2: 6, 3: 6, 4: 3, 5: 3, 6: 0, 7: 12}
    with pytest.raises(ValueError):
        evaluate_ruleset(seq, (8,))


def test_tolerance_bound_scales_with_period():
    # the same shape passes or fails identically at every time scale
    seq = PulseSequence.build(["+z", "-z", "+x", "-x", "+y", "-y"], 1.0)
    for s in (1e-9, 1.0, 1e6):
        rep = evaluate_ruleset(seq.scaled(s), (0, 1, 2, 4), tolerance=1e-9)
        assert [e.passed for e in rep.entries] == [e.passed for e in evaluate_ruleset(seq, (0, 1, 2, 4)).entries]


@given(sequences(2, 10))
def test_pulse_correction_is_frame_cross_product(seq):
    rows = rule_row1_disorder_disorder(seq)
    F = seq.frames.F
    rot = seq.rotations
    r2 = (2 * seq.tau_p / math.pi) ** 2
    cross = sum((np.cross(F[:, k], F[:, k + 1]) for k in range(seq.n - 1) if rot[k] == 1 and seq.tau_p > 0), np.zeros(3))
    eps = {(0, 1): 2, (1, 2): 0, (2, 0): 1}
    for (m, v), (_, pulse) in rows.items():
        lam = eps.get((m, v), eps.get((v, m)))
        sign = 1 if (m, v) in eps else -1
        assert pulse == pytest.approx(sign * r2 * C_DIS_DIS * cross[lam], abs=1e-14)


def _relabel(a: Axis) -> Axis:
    return Axis((a.index + 1) % 3 + 1 + (0 if a.sign > 0 else 3))


@given(sequences(2, 10))
def test_rules_are_covariant_under_axis_cycling(seq):
    moved = PulseSequence.build([_relabel(a) for a in seq.axes], list(seq.taus), seq.tau_p)
    shift = lambda ax: "".join("xyz"[("xyz".index(c) + 1) % 3] for c in ax)
    a, b = evaluate_ruleset(seq), evaluate_ruleset(moved)
    for e in a.entries:
        if e.rule == 0 and len(e.axes) == 2:
            continue  # imbalance pairs are unordered and reported as m < v
        f = b.get(e.rule, shift(e.axes))
        for x, y in ((e.main, f.main), (e.pulse, f.pulse), (e.q, f.q)):
            assert y == pytest.approx(x, abs=1e-12 * seq.T**2)


@given(sequences(2, 10))
def test_antisymmetric_pairs(seq):
    rep = evaluate_ruleset(seq, (1, 3))
    for m, v in PAIRS:
        ax, xa = "xyz"[m] + "xyz"[v], "xyz"[v] + "xyz"[m]
        for r in (1, 3):
            assert _total(rep.get(r, ax)) == pytest.approx(-_total(rep.get(r, xa)), abs=1e-12 * seq.T**2)


@given(sequences(2, 10))
def test_engine_totals_match_rows(seq):
    rows = (1, 2, 3, 4, 5)
    ref = evaluate_ruleset(seq, rows)
    eng = engine_ruleset(seq, rows, exact_boundary=False)
    for a, b in zip(ref.entries, eng.entries):
        assert (a.rule, a.axes) == (b.rule, b.axes)
        assert b.main == pytest.approx(_total(a), abs=1e-11 * seq.T**2)
    if seq.tau_p == 0:
        lit = engine_ruleset(seq, rows + (7,), exact_boundary=True)
        for a, b in zip(evaluate_ruleset(seq, rows + (7,)).entries, lit.entries):
            assert b.main == pytest.approx(_total(a), abs=1e-11 * seq.T**3)


@given(sequences(2, 10, finite_pulses=False))
def test_table_constants_agree_for_ideal_pulses(seq):
    a = evaluate_ruleset(seq, table_constants=False)
    b = evaluate_ruleset(seq, table_constants=True)
    assert [(e.main, e.pulse, e.q) for e in a.entries] == [(e.main, e.pulse, e.q) for e in b.entries]


def test_table_constants_change_only_rows_five_and_seven():
    seq = PulseSequence.build(["+z", "+x", "-y", "+x"], [1.0, 0.5, 1.5, 0.7], tau_p=0.2)
    a = evaluate_ruleset(seq, table_constants=False)
    b = evaluate_ruleset(seq, table_constants=True)
    changed = {e.rule for e, f in zip(a.entries, b.entries) if (e.main, e.q) != (f.main, f.q)}
    assert changed == {5, 7}


def test_report_round_trip():
    seq = PulseSequence.build(["+z", "+x", "-y", "+x"], [1.0, 0.5, 1.5, 0.7], tau_p=0.2)
    rep = evaluate_ruleset(seq, tolerance=1e-3)
    back = parse_report(format_report(rep))
    assert back == list(rep.entries)
    assert rep.residual_norm() == pytest.approx(math.sqrt(sum(e.main**2 + e.pulse**2 + e.q**2 for e in rep.entries)))
