import math

import numpy as np
import pytest
from hypothesis import given
from scipy.linalg import expm

from conftest import label_cycles, sequences
from seqdesign.frames import (
    AdjacencyError,
    Axis,
    AxisError,
    CycleError,
    Disorder,
    DurationError,
    FrameMatrix,
    Heisenberg,
    Ising,
    IsingCross,
    JunctionConflictError,
    MalformedFileError,
    Pulse,
    PulseSequence,
    all_kinds,
    apply_symmetrization,
    coefficient_trajectory,
    format_frame_matrix,
    frames_from_pulses,
    insert_pulse_frames,
    parse_frame_matrix,
    pulses_from_frames,
    read_frame_matrix,
    write_frame_matrix,
)

SX = np.array([[0, 1], [1, 0]]) / 2
SY = np.array([[0, -1j], [1j, 0]]) / 2
SZ = np.array([[1, 0], [0, -1]]) / 2


def test_axis_labels_and_negation():
    assert [a.label for a in Axis] == ["+x", "+y", "+z", "-x", "-y", "-z"]
    for a in Axis:
        assert -(-a) == a
        assert int(-a) == int(a) + 3 if int(a) <= 3 else int(a) - 3
        assert Axis.from_label(a.label) == a
        assert Axis.from_vector(a.vector) == a
    assert Axis.from_label("Z") == Axis.PZ
    with pytest.raises(AxisError):
        Axis.from_label("+w")
    with pytest.raises(AxisError):
        Axis.from_vector([1, 1, 0])


def test_cycle_time_counts_rotations():
    seq = PulseSequence.build(["+z", "+x", "-x"], [1.0, 2.0, 0.5], tau_p=0.0)
    assert list(seq.rotations) == [1, 2, 1]
    assert seq.T == 3.5
    seq = PulseSequence.build(["+z", "+x", "+y"], [1.0, 2.0, 0.5], tau_p=0.1)
    assert seq.T == pytest.approx(3.5 + 3 * 0.1, abs=1e-15)


def test_continuation_frames_need_allow_repeats():
    with pytest.raises(AdjacencyError):
        PulseSequence.build(["+z", "+z", "+x"], 1.0)
    seq = PulseSequence.build(["+z", "+z", "+x"], 1.0, tau_p=0.2, allow_repeats=True)
    assert list(seq.rotations) == [0, 1, 1]
    assert seq.T == pytest.approx(3.4)


def test_antiparallel_with_finite_pulses_is_rejected():
    with pytest.raises(AdjacencyError, match="intermediate"):
        PulseSequence.build(["+z", "-z"], 1.0, tau_p=0.1)
    # the closing transition is checked too
    with pytest.raises(AdjacencyError, match="closing"):
        PulseSequence.build(["+z", "+x", "-z"], 1.0, tau_p=0.1)


def test_bad_durations():
    with pytest.raises(DurationError):
        PulseSequence.build(["+z", "+x"], [1.0, -1.0])
    with pytest.raises(DurationError):
        PulseSequence.build(["+z", "+x"], [1.0, float("nan")])
    with pytest.raises(DurationError):
        PulseSequence.build(["+z", "+x"], 1.0, tau_p=-0.1)


def test_file_round_trip(tmp_path):
    seq = PulseSequence.build(["+z", "+x", "-y", "+x"], [1.5, 0.0, 2.25, 1e-7], tau_p=3e-8)
    path = tmp_path / "s.frames"
    write_frame_matrix(path, seq, comment="demo\nsecond line")
    back = read_frame_matrix(path)
    assert back == seq
    assert format_frame_matrix(back) == format_frame_matrix(seq)
    assert back.frames.pulse_frames == (False, True, False, False)


@pytest.mark.parametrize(
    "text, err",
    [
        ("", MalformedFileError),
        ("frames 2 tau_p 0\n+z 1 0\n", MalformedFileError),
        ("frames 2 tau_p 0\n+z 1 0\n+w 1 0\n", AxisError),
        ("frames 2 tau_p 0\n+z 1 0\n+x -1 0\n", DurationError),
        ("frames 2 tau_p 0\n+z 1 0\n+x 1 2\n", MalformedFileError),
        ("frame 2 tau_p 0\n+z 1 0\n+x 1 0\n", MalformedFileError),
        ("frames 2 tau_p 0\n+z 1 0\n+z 1 0\n", AdjacencyError),
        ("frames 2 tau_p 0.1\n+z 1 0\n-z 1 0\n", AdjacencyError),
    ],
)
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_frame_matrix(text)


def test_parse_comments_and_blank_lines():
    text = "# header\n\nframes 2 tau_p 0  # ideal\n+z 1 0\n\n-x 2 0 # tail\n"
    seq = parse_frame_matrix(text)
    assert seq.frames.labels() == ["+z", "-x"]
    assert seq.taus.tolist() == [1.0, 2.0]


def _rot(p: Pulse):
    S = SX if p.axis == "x" else SY
    return expm(-1j * (math.pi / 2) * p.sign * S)


@pytest.mark.parametrize("label", ["X", "-X", "Y", "-Y"])
def test_pulse_matrix_matches_spin_rotation(label):
    p = Pulse.from_label(label)
    P = _rot(p)
    M = p.matrix
    S = [SX, SY, SZ]
    for n in np.eye(3):
        lhs = P.conj().T @ sum(n[a] * S[a] for a in range(3)) @ P
        m = M @ n
        rhs = sum(m[a] * S[a] for a in range(3))
        assert np.allclose(lhs, rhs, atol=1e-14)


def test_frames_from_pulses_four_x():
    fm = frames_from_pulses(["X", "X", "X", "X"], [1.0, 0.0, 1.0, 0.0])
    assert [a.label for a in fm.axes] == ["+z", "+y", "-z", "-y", "+z"]
    assert fm.taus == (1.0, 0.0, 1.0, 0.0, 0.0)
    assert fm.pulse_frames == (False, True, False, True, False)


def test_frames_from_pulses_x_then_minus_x():
    fm = frames_from_pulses(["X", "-X"], [1.0, 1.0])
    assert [a.label for a in fm.axes] == ["+z", "+y", "+z"]


@given(label_cycles(2, 8))
def test_pulses_round_trip_to_frames(labels):
    # any cycle that starts at +z is reproduced by its pulse train
    labels = [3] + [x for x in labels[1:]]
    if labels[1] == 3 or labels[-1] == 3:
        return
    seq = PulseSequence.build(labels, [1.0 + 0.1 * k for k in range(len(labels))])
    pulses, delays = pulses_from_frames(seq)
    fm = frames_from_pulses(pulses, delays)
    assert fm.axes[-1] == Axis.PZ
    kept = [(a, t) for a, t in zip(fm.axes[:-1], fm.taus[:-1]) if t > 0]
    assert [a for a, _ in kept] == list(seq.axes)
    assert [t for _, t in kept] == pytest.approx(list(seq.taus))


def test_pulses_from_frames_needs_plus_z_start():
    with pytest.raises(CycleError):
        pulses_from_frames(PulseSequence.build(["+x", "+y"], 1.0))


def test_insert_pulse_frames_splits_pi_pulses():
    seq = PulseSequence.build(["+z", "-z", "+x", "-x"], 1.0)
    out = insert_pulse_frames(seq, tau_p=0.1)
    # +z->-z and +x->-x are antiparallel; -z->+x and -x->+z are single pulses
    assert len(out.axes) == 6
    assert out.frames.pulse_frames == (False, True, False, False, True, False)
    assert set(out.rotations.tolist()) == {1}
    assert out.T == pytest.approx(4.0 + 6 * 0.1)
    for k in range(out.n):
        if out.frames.pulse_frames[k]:
            assert out.frames.taus[k] == 0.0
            a, b = out.axes[k - 1], out.axes[(k + 1) % out.n]
            assert a == -b and out.axes[k] not in (a, b)


def test_symmetrization_modes():
    base = PulseSequence.build(["+z", "-z"], 1.0)
    anti = apply_symmetrization(base, "antisymmetric")
    assert anti.frames.labels() == ["+z", "-z", "+z", "-z"]
    with pytest.raises(JunctionConflictError):
        apply_symmetrization(base, "mirror")
    mir = apply_symmetrization(base, "mirror", allow_repeats=True)
    assert mir.frames.labels() == ["+z", "-z", "-z", "+z"]
    with pytest.raises(ValueError):
        apply_symmetrization(base, "twist")


def test_term_kinds():
    kinds = all_kinds()
    assert len(kinds) == 13 and len(set(kinds)) == 13
    assert Disorder("z") == Disorder(2)
    assert IsingCross(0, 1).label == "Cross(xy)"
    with pytest.raises(ValueError):
        IsingCross(1, 1)
    with pytest.raises(ValueError):
        Ising(3)


def test_trajectory_shapes_for_one_pulse():
    seq = PulseSequence.build(["+z", "+x"], 1.0, tau_p=0.1)
    tz = coefficient_trajectory(seq, Disorder(2))
    assert [s.shape for s in tz.segments] == ["const", "cos", "const", "sin"]
    assert [s.amplitude for s in tz.segments] == [1.0, 1.0, 0.0, 1.0]
    cross = coefficient_trajectory(seq, IsingCross(2, 0))
    assert [(s.shape, s.amplitude) for s in cross.segments if s.ramp] == [("sincos", 1.0), ("sincos", 0.0)]
    heis = coefficient_trajectory(seq, Heisenberg())
    assert heis.integral() == pytest.approx(seq.T)


@given(sequences(2, 8))
def test_trajectory_period_and_sampling(seq):
    for kind in all_kinds():
        tr = coefficient_trajectory(seq, kind)
        assert math.fsum(s.duration for s in tr.segments) == pytest.approx(seq.T, rel=1e-12)
        # integral equals a fine midpoint sum of the sampled trajectory
        t = (np.arange(20000) + 0.5) * seq.T / 20000
        ref = np.sum(tr.sample(t)) * seq.T / 20000
        assert tr.integral() == pytest.approx(ref, abs=2e-3 * seq.T)


@given(sequences(2, 8, finite_pulses=False))
def test_ideal_disorder_integral_is_sum_f_tau(seq):
    F = seq.frames.F
    for m in range(3):
        tr = coefficient_trajectory(seq, Disorder(m))
        assert tr.integral() == pytest.approx(float(F[m] @ seq.taus), abs=1e-12)


def test_scaled_sequence():
    seq = PulseSequence.build(["+z", "+x"], [1.0, 3.0], tau_p=0.5)
    s = seq.scaled(2.0)
    assert s.T == pytest.approx(2 * seq.T)
    assert s.tau_p == 1.0
    with pytest.raises(MalformedFileError):
        FrameMatrix((Axis.PZ,), (1.0, 2.0), (False,))
