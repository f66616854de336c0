import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from config.models import Nucleus, System1D  # noqa: E402
from services.quantum1d import gauss_legendre_grid  # noqa: E402

PRESETS = ROOT / "presets"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_grid():
    return gauss_legendre_grid(-10.0, 10.0, 30, 30)


@pytest.fixture(scope="session")
def small_grid():
    return gauss_legendre_grid(-6.0, 6.0, 8, 8)


@pytest.fixture(scope="session")
def hydrogenic_z3():
    """One electron in the Z=3 soft-Coulomb well"""
    return System1D(n_electrons=1, nuclei=(Nucleus(position=0.0, charge=3.0),), name="Z3")


@pytest.fixture(scope="session")
def heh_plus():
    return System1D.helium_hydride()


@pytest.fixture(scope="session")
def lithium():
    return System1D.lithium()


@pytest.fixture(scope="session")
def fd_ground_state():
    """Lowest eigenvalue of -1/2 d^2/dx^2 + v(x) by second-order finite differences on [a, b]"""

    def solve(potential, a=-10.0, b=10.0, points=4000):
        x, h = np.linspace(a, b, points + 2, retstep=True)
        interior = x[1:-1]
        diagonal = 1.0 / h ** 2 + potential(interior)
        off = np.full(points - 1, -0.5 / h ** 2)
        values = scipy.linalg.eigh_tridiagonal(diagonal, off, eigvals_only=True, select="i", select_range=(0, 0))
        return float(values[0])

    return solve
