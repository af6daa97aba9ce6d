import itertools

import numpy as np
import pytest

from seqdesign.frames import Axis, PulseSequence
from seqdesign.rules import evaluate_ruleset
from seqdesign.search import (
    InfeasibleConstraintsError,
    SearchConfig,
    StructureConstraints,
    candidate_blocks,
    enumerate_candidates,
    rank_candidates,
    read_catalog_index,
    run_search,
    screen,
    search_space_size,
    write_catalog,
)


def _brute_force(c: StructureConstraints):
    return [lab for lab in itertools.product(range(1, 7), repeat=c.length) if c.admits(lab)]


@pytest.mark.parametrize(
    "cons",
    [
        StructureConstraints(4, echo_pairing=False),
        StructureConstraints(5, echo_pairing=False, first_frame=None),
        StructureConstraints(6),
        StructureConstraints(6, row_balance=True),
        StructureConstraints(6, echo_pairing=False, row_balance=True),
        StructureConstraints(8, dipole_balance=True),
    ],
)
def test_exhaustive_stream_equals_brute_force(cons):
    blocks = list(candidate_blocks(SearchConfig(constraints=cons, sampler="exhaustive")))
    got = [tuple(int(x) for x in row) for _, b in blocks for row in b]
    assert sorted(got) == sorted(_brute_force(cons))
    assert len(set(got)) == len(got) == search_space_size(cons)


@pytest.mark.parametrize(
    "cons",
    [StructureConstraints(12), StructureConstraints(12, row_balance=True), StructureConstraints(12, dipole_balance=True)],
)
def test_random_draws_are_admissible(cons):
    cfg = SearchConfig(constraints=cons, sampler="random", budget=3000, seed=7)
    rows = [row for _, b in candidate_blocks(cfg) for row in b]
    assert len(rows) == 3000
    assert all(cons.admits(r) for r in rows)


def test_infeasible_constraints():
    with pytest.raises(InfeasibleConstraintsError):
        StructureConstraints(5).check()
    with pytest.raises(InfeasibleConstraintsError):
        StructureConstraints(6, dipole_balance=True).check()
    with pytest.raises(InfeasibleConstraintsError):
        StructureConstraints(6, echo_pairing=False, dipole_balance=True).check()
    # two echo pairs on one axis always repeat a frame at the junction
    with pytest.raises(InfeasibleConstraintsError):
        list(candidate_blocks(SearchConfig(constraints=StructureConstraints(4, dipole_balance=True), sampler="exhaustive")))


def test_config_text_round_trip():
    cfg = SearchConfig(
        constraints=StructureConstraints(12, row_balance=True, first_frame=None),
        rules=(4, 0, 1),
        tolerance=1e-7,
        budget=1234,
        seed=9,
        symmetrization="antisymmetric",
        tau=2.5e-9,
        tau_p_ratio=0.1,
        h=(1.0, 2.0),
    )
    back = SearchConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.rules == (0, 1, 4)
    assert back.tau_p == pytest.approx(2.5e-10)
    over = SearchConfig.from_text("length = 6\nseed = 1 # comment\n", seed=3)
    assert over.seed == 3 and over.constraints.length == 6


@pytest.mark.parametrize(
    "text",
    ["seed = 1\n", "length = 6\nbogus = 1\n", "length = 6\necho_pairing = maybe\n", "length 6\n", "length = 6\nsampler = grid\n"],
)
def test_config_errors(text):
    with pytest.raises(ValueError):
        SearchConfig.from_text(text)


def test_survivors_pass_the_direct_rules():
    cfg = SearchConfig(constraints=StructureConstraints(6), rules=(0,), sampler="exhaustive")
    res = run_search(cfg)
    assert res.n_candidates == search_space_size(cfg.constraints)
    assert res.survivors
    direct = [s for s in enumerate_candidates(cfg) if evaluate_ruleset(s, cfg.rules).passed]
    assert [s.labels for s in res.survivors] == [tuple(int(a) for a in s.axes) for s in direct]


def test_more_rules_never_admit_more():
    base = StructureConstraints(12, dipole_balance=True)
    sets = [(0,), (0, 1), (0, 1, 2), (0, 1, 2, 4), (0, 1, 2, 3, 4, 5)]
    found = [{s.labels for s in run_search(SearchConfig(constraints=base, rules=r, budget=4000, seed=4)).survivors} for r in sets]
    for a, b in zip(found, found[1:]):
        assert b <= a


def test_search_is_deterministic_across_threads(tmp_path):
    cfg = SearchConfig(constraints=StructureConstraints(12, dipole_balance=True), rules=(0, 1, 4), budget=10000, seed=5, keep=10)
    outs = []
    for k, threads in enumerate((1, 4)):
        res = run_search(cfg, threads=threads)
        d = write_catalog(res, tmp_path / str(k))
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    idx = read_catalog_index(tmp_path / "0" / "index.csv")
    assert [r for r, *_ in idx] == list(range(1, len(idx) + 1))
    metrics = [m for _, _, m, _ in idx]
    assert metrics == sorted(metrics)
    assert SearchConfig.from_text((tmp_path / "0" / "search.conf").read_text()) == cfg


def test_catalog_index_header(tmp_path):
    p = tmp_path / "index.csv"
    p.write_text("id,rank\n")
    with pytest.raises(ValueError):
        read_catalog_index(p)


def test_finite_pulse_search_screens_inserted_frames():
    cfg = SearchConfig(constraints=StructureConstraints(6), rules=(0,), sampler="exhaustive", tau_p_ratio=0.05)
    seqs = list(enumerate_candidates(cfg))
    # one pulse frame per antiparallel transition, three inside the echo pairs at least
    assert all(s.n >= 9 and s.tau_p == pytest.approx(0.05) for s in seqs)
    assert all(int(a) != int(-b) for s in seqs for a, b in zip(s.axes, s.axes[1:] + s.axes[:1]))
    res = run_search(cfg)
    for s in res.survivors:
        assert evaluate_ruleset(s.sequence, (0,)).passed


def test_rank_orders_by_metric_then_labels():
    seqs = [
        PulseSequence.build(["+z", "-z", "+x", "-x", "+y", "-y"], 1.0),
        PulseSequence.build(["+z", "+x"], 1.0),
        PulseSequence.build(["+z", "-z"], 1.0),
    ]
    pairs = [(s, evaluate_ruleset(s, (0, 1))) for s in seqs]
    ranked = rank_candidates(pairs)
    norms = [r.residual_norm() for _, r in ranked]
    assert norms == sorted(norms)
    with pytest.raises(ValueError):
        rank_candidates(pairs, metric="simulated")
    assert rank_candidates([]) == []


def test_screen_keeps_input_order():
    seqs = [
        PulseSequence.build(["+z", "-z", "+x", "-x", "+y", "-y"], 1.0),
        PulseSequence.build(["+z", "+x"], 1.0),
        PulseSequence.build(["+x", "-x", "+y", "-y", "+z", "-z"], 1.0),
    ]
    kept = screen(seqs, (0,))
    assert [s for s, _ in kept] == [seqs[0], seqs[2]]
    assert all(r.passed for _, r in kept)


def test_first_frame_constraint():
    cfg = SearchConfig(constraints=StructureConstraints(6, first_frame=Axis.MX), sampler="exhaustive")
    assert all(int(b[:, 0].min()) == int(b[:, 0].max()) == 4 for _, b in candidate_blocks(cfg))
    assert np.all(np.concatenate([b for _, b in candidate_blocks(cfg)])[:, 1] == 1)


def test_single_echo_listing():
    free = SearchConfig(constraints=StructureConstraints(2, first_frame=None), sampler="exhaustive")
    rows = sorted(tuple(int(x) for x in r) for _, b in candidate_blocks(free) for r in b)
    assert rows == [(1, 4), (2, 5), (3, 6), (4, 1), (5, 2), (6, 3)]
    fixed = SearchConfig(constraints=StructureConstraints(2), sampler="exhaustive")
    assert search_space_size(fixed.constraints) == 1


def test_single_echoes_fail_the_dipole_row():
    echoes = list(enumerate_candidates(SearchConfig(constraints=StructureConstraints(2, first_frame=None), sampler="exhaustive")))
    assert screen(echoes, (4,)) == []
    assert len(screen(echoes, ())) == 6


def test_simulated_ranking():
    from seqdesign.operators import HamiltonianParams
    from seqdesign.simulate import effective_error

    cfg = SearchConfig(
        constraints=StructureConstraints(12, dipole_balance=True),
        rules=(0, 1, 4),
        budget=2000,
        seed=6,
        keep=4,
        rank_metric="simulated",
        tau=1e-7,
    )
    res = run_search(cfg)
    assert res.ranked
    metrics = [s.metric for s in res.ranked]
    assert metrics == sorted(metrics)
    p = HamiltonianParams(cfg.h, cfg.J)
    for s in res.ranked:
        assert s.metric == pytest.approx(effective_error(s.sequence, p), rel=1e-12)
