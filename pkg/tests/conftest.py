import numpy as np
import pytest

from ergo import pde
from ergo.gfunc import GFunction
from ergo.model import make_builtin

UNCERTAIN = GFunction(0.25, 1.0)


@pytest.fixture(scope="session")
def gou():
    return make_builtin("g_ou", [0.5], g=UNCERTAIN)


@pytest.fixture(scope="session")
def gou_classical():
    return make_builtin("g_ou", [0.5], g=GFunction(1.0, 1.0))


@pytest.fixture(scope="session")
def dirac_model():
    return make_builtin("dirac", g=UNCERTAIN)


@pytest.fixture(scope="session")
def small_grid():
    """Coarse rig for module tests; acceptance uses the default rig."""
    return pde.Grid1D(nx=401)


@pytest.fixture(scope="session")
def tiny_grid():
    return pde.Grid1D(nx=161)


def gauss_hermite_expectation(fn, variance, n=96):
    """Independent oracle: E[fn(Z)] for Z ~ N(0, variance) by quadrature."""
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    x = nodes * np.sqrt(2.0 * variance)
    return float(np.sum(weights * fn(x)) / np.sqrt(np.pi))
