from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from rankforge.graph import DiGraph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def tournament(n: int, weight: float = 1.0) -> DiGraph:
    """Complete transitive tournament: node i beats every j > i."""
    A = np.triu(np.full((n, n), weight), k=1)
    return DiGraph(A)


def random_graph(rng: np.random.Generator, n: int, density: float = 0.5) -> DiGraph:
    A = rng.uniform(0.1, 2.0, size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    np.fill_diagonal(A, 0.0)
    if not np.any(A + A.T):
        A[0, 1] = 1.0
    return DiGraph(A)


def offset_graph(s: np.ndarray) -> DiGraph:
    """Complete noiseless offset data: A_ij = s_i - s_j where positive."""
    D = s[:, None] - s[None, :]
    return DiGraph(np.where(D > 0, D, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
