import numpy as np
import pytest

from maxreg import CalculusEngine, FormPath, make_triple


def scalar_path(fn, grid=None, lam=1.0, interp="linear", nu=0.0):
    """Scalar path ``a(t) = fn(t)`` on ``Lambda = {lam}`` with ``M_H = [1]``."""
    grid = np.linspace(0.0, 1.0, 129) if grid is None else np.asarray(grid, dtype=float)
    tri = make_triple(np.eye(1), lam * np.eye(1))
    forms = np.array([[[fn(t)]] for t in grid], dtype=float)
    return FormPath(tri, grid, forms, interp=interp, nu=nu)


def diag_path(diags, grid=None, lam=(1.0, 4.0)):
    """Diagonal path ``A(t) = diag(diags(t))`` on ``Lambda = diag(lam)``."""
    grid = np.linspace(0.0, 1.0, 65) if grid is None else np.asarray(grid, dtype=float)
    tri = make_triple(np.eye(len(lam)), np.diag(lam))
    forms = np.array([np.diag(diags(t)) for t in grid], dtype=float)
    return FormPath(tri, grid, forms)


@pytest.fixture
def engine():
    return CalculusEngine()


@pytest.fixture
def contour_engine():
    return CalculusEngine(backend="contour")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
