from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bvss.panel import PanelData  # noqa: E402


def make_panel(M=12, N=4, M_post=5, seed=0, w=None, noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((M, N))
    Xp = rng.standard_normal((M_post, N))
    if w is None:
        w = np.zeros(N)
        w[: min(2, N)] = [0.6, 0.4][: min(2, N)]
    Y = X @ w + noise * rng.standard_normal(M)
    Yp = Xp @ w + 0.5 + noise * rng.standard_normal(M_post)
    return PanelData(Y, X, Xp, Yp)


@pytest.fixture
def panel():
    return make_panel()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


@pytest.fixture
def accept():
    """Record a criterion outcome; fails the calling test when ``ok`` is false."""

    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
