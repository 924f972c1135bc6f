from __future__ import annotations

import pytest

from coinvade.kernel import KernelSpec
from coinvade.model import ModelParams

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def preset() -> ModelParams:
    """Two symmetric competitors with one delay slot; coexistence at 0.8."""
    return ModelParams(1.0, 1.0, 1, (0.1,), (0.1,), (0.1, 0.05), (0.1, 0.05))


@pytest.fixture
def preset_sym() -> ModelParams:
    """Symmetric variant with coexistence at 1/1.3."""
    return ModelParams(1.0, 1.0, 1, (0.1,), (0.1,), (0.1, 0.1), (0.1, 0.1))


@pytest.fixture
def gauss_pair():
    g = KernelSpec.gaussian(1.0)
    return [g, g]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
