import subprocess
import sys

import pytest

from seqdesign.cli import main
from seqdesign.frames import PulseSequence, write_frame_matrix
from seqdesign.rules import evaluate_ruleset, format_report, parse_report
from seqdesign.search import read_catalog_index
from seqdesign.simulate import parse_dump


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, labels, tau in [
        ("echo6", ["+z", "-z", "+x", "-x", "+y", "-y"], 1e-6),
        ("pair", ["+z", "+x"], 1e-6),
        ("mixed", ["+z", "+x", "-y", "+x", "-z", "+y"], 1e-7),
    ]:
        p = tmp_path / f"{name}.frames"
        write_frame_matrix(p, PulseSequence.build(labels, tau))
        out[name] = p
    bad = tmp_path / "bad.frames"
    bad.write_text("frames 2 tau_p 0\n+z 1 0\n+z 1 0\n")
    out["bad"] = bad
    return out


def test_validate(files, capsys):
    assert main(["validate", str(files["echo6"])]) == 0
    out = capsys.readouterr().out
    assert "frames=6" in out and "status=valid" in out and "pi_pulses=3" in out
    assert main(["validate", str(files["bad"])]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["validate", str(files["bad"]), "--allow-repeats"]) == 0


def test_validate_with_pulse_frames(files, capsys):
    assert main(["validate", str(files["echo6"]), "--tau-p-ratio", "0.1"]) == 0
    out = capsys.readouterr().out
    assert "pulse_frames=3" in out and "pi_pulses=0" in out


def test_rules_matches_library(files, tmp_path):
    out = tmp_path / "r.txt"
    assert main(["rules", str(files["mixed"]), "--rules", "0,1,4", "-o", str(out), "--tolerance", "1e-6"]) == 0
    seq = PulseSequence.build(["+z", "+x", "-y", "+x", "-z", "+y"], 1e-7)
    assert out.read_text() == format_report(evaluate_ruleset(seq, (0, 1, 4), 1e-6))
    assert main(["rules", str(files["mixed"]), "--exact-boundary", "-o", str(out)]) == 0
    assert {e.rule for e in parse_report(out.read_text())} == {0, 1, 2, 3, 4, 5, 7}
    assert main(["rules", str(files["mixed"]), "--exact-boundary", "--table-constants"]) == 1
    assert main(["rules", str(files["mixed"]), "--rules", "9"]) == 1


def test_screen_writes_catalog(tmp_path):
    conf = tmp_path / "s.conf"
    conf.write_text("length = 12\ndipole_balance = true\nrules = 0,1,4\nbudget = 3000\nkeep = 5\n")
    out = tmp_path / "cat"
    argv = ["screen", "--config", str(conf), "--out", str(out), "--seed", "3", "--threads", "2"]
    assert main(argv) == 0
    idx = read_catalog_index(out / "index.csv")
    assert 1 <= len(idx) <= 5
    for _, i, _, _ in idx:
        assert (out / f"{i:08d}.frames").exists()
    assert main(["validate", str(out / f"{idx[0][1]:08d}.frames")]) == 0
    conf.write_text("length = 5\n")
    assert main(["screen", "--config", str(conf), "--out", str(out)]) == 1
    assert main(["screen", "--config", str(tmp_path / "missing.conf"), "--out", str(out)]) == 1


def test_simulate(files, tmp_path):
    out = tmp_path / "h.txt"
    argv = ["simulate", str(files["pair"]), "--h", "1e5,0", "--J", "1e4", "--target", "zeroth", "-o", str(out)]
    assert main(argv) == 0
    eff = parse_dump(out.read_text())
    assert eff.n_spins == 2 and eff.T == pytest.approx(2e-6)
    assert main(argv[:-2] + ["--method", "toggling", "-o", str(tmp_path / "t.txt")]) == 0
    other = parse_dump((tmp_path / "t.txt").read_text())
    for k in eff.coeffs:
        assert other[k] == pytest.approx(eff[k], abs=1e-6 * eff.norm())
    assert main(["simulate", str(files["pair"]), "--period", "-1"]) == 1


def test_scaling(files, capsys):
    assert main(["scaling", str(files["mixed"]), "--parameter", "J", "--values", "1e4,2e4,4e4", "--h", "1e5,0", "--component", "XZ", "--target", "none"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# component=XZ parameter=J")
    assert len(out.splitlines()) == 5


def test_selection_check(capsys):
    assert main(["selection-check", "--trials", "20"]) == 0
    assert capsys.readouterr().out.count("PASS") == 12
    assert main(["selection-check", "--trials", "20", "--tolerance", "-1"]) == 1


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["nonsense"]) == 2
    assert main(["rules"]) == 2
    capsys.readouterr()


def test_console_entry_point(files):
    r = subprocess.run([sys.executable, "-m", "seqdesign.cli", "validate", str(files["pair"])], capture_output=True, text=True)
    assert r.returncode == 0 and "status=valid" in r.stdout
