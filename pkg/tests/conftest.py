import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nlffr.funcdata import ObservedCurve  # noqa: E402

# (criterion, passed, detail) rows filled by the acceptance module
ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    ACCEPTANCE_LINES.append((criterion, passed, detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def random_curves(rng, n, m_range=(3, 8), prefix="s"):
    """Curves on random distinct times in (0, 1] with smooth-ish values."""
    out = []
    for i in range(n):
        m = int(rng.integers(*m_range))
        t = np.sort(rng.choice(np.arange(1, 101), m, replace=False)) / 100.0
        v = np.sin(2 * np.pi * (t + rng.uniform())) * rng.normal(1, 0.3) + 0.1 * rng.standard_normal(m)
        out.append(ObservedCurve(f"{prefix}{i}", t, v))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy_pair(rng):
    xs = random_curves(rng, 6)
    ys = [ObservedCurve(c.subject_id, c.times, np.cos(3 * c.values) + c.times) for c in xs]
    return xs, ys
