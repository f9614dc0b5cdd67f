from __future__ import annotations

import numpy as np
import pytest

from harmlab.fields import analytic_field
from harmlab.manifold import Cone2D, FlatGrid, Product, WarpedGrid2D, build_manifold


@pytest.fixture(scope="session")
def flat2():
    """Small planar grid used by most flat checks."""
    return build_manifold(FlatGrid(2, 10.0, 0.5))


@pytest.fixture(scope="session")
def flat3():
    return build_manifold(FlatGrid(3, 6.0, 0.5))


@pytest.fixture(scope="session")
def cap():
    return build_manifold(WarpedGrid2D("capped_cylinder", 12.0, 48, 32))


@pytest.fixture(scope="session")
def cone07():
    return build_manifold(Cone2D(0.7, 16.0, 64, 64))


@pytest.fixture(scope="session")
def saddle():
    return build_manifold(WarpedGrid2D("saddle", 2.0, 32, 32, negative_control=True), check_scale=False)


@pytest.fixture(scope="session")
def cylinder_product():
    """S^1 x R realised as a WarpedGrid2D with f = 1, times one flat axis."""
    factor = WarpedGrid2D("cylinder", 4.0, 16, 16)
    return build_manifold(Product(factor, 1, 4.0, 0.5), check_scale=False)


@pytest.fixture(scope="session")
def flat_linear(flat2):
    return analytic_field(flat2, "linear", {"A": np.array([[1.0, 1.0], [0.0, 1.0]])})


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Acceptance criteria: one PASS/FAIL line per criterion in the terminal summary

ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, note)``; the line is printed at once and again in the summary."""

    def record(number: int, passed: bool, note: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({note})"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
