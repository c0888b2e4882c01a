"""Shared oracles: central finite differences and a scalar Cox-de Boor recursion."""

from __future__ import annotations

import numpy as np
import pytest

FD_STEP = 1e-5
FD_TOL = 1e-4


def central_difference(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(num / den)


def scalar_bspline(knots, i: int, p: int, x: float) -> float:
    """Textbook recursive B_{i,p}(x); the last knot interval is closed."""
    if p == 0:
        lo, hi = knots[i], knots[i + 1]
        if lo <= x < hi:
            return 1.0
        return 1.0 if (i + 1 == len(knots) - 1 and x == hi) else 0.0
    left = 0.0
    if knots[i + p] != knots[i]:
        left = (x - knots[i]) / (knots[i + p] - knots[i]) * scalar_bspline(knots, i, p - 1, x)
    right = 0.0
    if knots[i + p + 1] != knots[i + 1]:
        right = (knots[i + p + 1] - x) / (knots[i + p + 1] - knots[i + 1]) * scalar_bspline(knots, i + 1, p - 1, x)
    return left + right


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def iris_prepared():
    from fedkan.config import RunConfig
    from fedkan.experiment import prepare_data

    return prepare_data(RunConfig())


@pytest.fixture(scope="session")
def iris_shards(iris_prepared):
    return iris_prepared.shards


# Acceptance tests append (criterion, passed, detail) here; printed after the run.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
