import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# (name, passed, detail) collected by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@st.composite
def label_cycles(draw, min_n=2, max_n=10, no_antiparallel=False, first=None):
    """Cyclic label lists whose neighbours differ (optionally not antiparallel)."""
    n = draw(st.integers(min_n, max_n))
    labels = [draw(st.integers(1, 6)) if first is None else int(first)]
    for _ in range(n - 1):
        prev = labels[-1]
        labels.append(draw(st.sampled_from([x for x in range(1, 7) if x != prev and not (no_antiparallel and abs(x - prev) == 3)])))
    bad = labels[-1] == labels[0] or (no_antiparallel and abs(labels[-1] - labels[0]) == 3)
    if bad:
        labels[-1] = next(
            x for x in range(1, 7)
            if x not in (labels[-2], labels[0])
            and not (no_antiparallel and (abs(x - labels[-2]) == 3 or abs(x - labels[0]) == 3))
        )
    return labels


@st.composite
def sequences(draw, min_n=2, max_n=10, finite_pulses=None, first=None):
    """Random valid sequences with mixed durations; ``finite_pulses`` None draws either."""
    from seqdesign.frames import PulseSequence

    fp = draw(st.booleans()) if finite_pulses is None else finite_pulses
    labels = draw(label_cycles(min_n, max_n, no_antiparallel=fp, first=first))
    taus = draw(st.lists(st.floats(0.2, 2.0), min_size=len(labels), max_size=len(labels)))
    tau_p = draw(st.floats(0.02, 0.2)) if fp else 0.0
    return PulseSequence.build(labels, taus, tau_p=tau_p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
