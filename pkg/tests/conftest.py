"""Shared fixtures and the acceptance reporting hook."""

from __future__ import annotations

import numpy as np
import pytest

from copysampler import ConcentricCirclesOracle, HalfspaceOracle
from copysampler.core import RandomSource

# Collected by tests/test_acceptance.py and printed after the run so the
# per-criterion verdict lines survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line("  " + line)


@pytest.fixture
def rng():
    return RandomSource(20240117)


@pytest.fixture
def halfspace():
    return HalfspaceOracle(w=(1.0, 0.0), c=0.5)


@pytest.fixture
def circles():
    return ConcentricCirclesOracle(center=(0.5, 0.5), radii=[0.25])


@pytest.fixture
def probe_grid():
    g = np.linspace(0.01, 0.99, 40)
    xx, yy = np.meshgrid(g, g)
    return np.column_stack([xx.ravel(), yy.ravel()])
