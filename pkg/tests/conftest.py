"""Shared helpers: random constraint-satisfying states and grid samplers."""

import numpy as np
import pytest

from cvsheet.evolution import ModeSpec, initial_data
from cvsheet.geometry import Front
from cvsheet.norms import random_front
from cvsheet.spectral import Grid


def sample_grid(grid: Grid, p: int | None = None):
    """Meshgrid (x1, x2, x3) of the tangential p-grid times the layer nodes."""
    p = grid.n if p is None else p
    xs = np.arange(p) / p
    return np.meshgrid(xs, xs, grid.x3, indexing="ij")


def random_state(rng: np.random.Generator, K: int = 8, M: int = 17, n_modes: int = 4, amp: float = 0.05,
                 front_size: float = 0.05, band: int = 2, background: float = 0.3):
    """Constraint-satisfying state with random background, modes and front."""
    modes = []
    for _ in range(n_modes):
        k = tuple(int(x) for x in rng.integers(-band, band + 1, size=2))
        if k == (0, 0):
            k = (1, 0)
        z = lambda: complex(*rng.standard_normal(2)) * amp
        modes.append(ModeSpec(k, z(), z(), z(), z()))
    bg = lambda: tuple(background * rng.standard_normal(2))
    state = initial_data(bg(), bg(), bg(), bg(), modes, K=K, M=M)
    f = random_front(K, rng, band)
    f = f * (front_size / np.max(np.abs(f.values())))
    return state.__class__(state.u_plus, state.u_minus, state.b_plus, state.b_minus,
                           Front(f, state.front.fdot), 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines at the end of the run."""
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS.values():
        terminalreporter.write_line(line)
