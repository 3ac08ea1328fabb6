import numpy as np
import pytest

from ccim.levelset import catalog_surface
from ccim.mesh import SignField, build_grid, sign_field

SEED = 20240917


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def sphere_grid():
    grid = build_grid(20)
    surface = catalog_surface("sphere", radius=0.5)
    return grid, surface, sign_field(grid, surface)


def signs_from(sign_array, phi=None):
    """SignField from an explicit +-1 array (|phi| defaults to one)."""
    sign = np.asarray(sign_array, dtype=np.int8)
    if phi is None:
        phi = sign.astype(float)
    return SignField(phi=np.asarray(phi, dtype=float), sign=sign)


_ACCEPTANCE: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one ``PASS``/``FAIL`` line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
