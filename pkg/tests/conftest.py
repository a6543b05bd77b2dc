import math
import time

import numpy as np
import pytest

from deltamass.meanfield import MeanFieldProblem, minimize_mass
from deltamass.sphere import ROBIN_UNIT_AREA, SphereQuadrature
from deltamass.torus import TorusGrid, TorusModulus, ewald_robin

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}
# wall time of each minimizer fixture, keyed by (tau, n)
TIMINGS = {}

HEX = complex(0.5, math.sqrt(3) / 2)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture(scope="session")
def square():
    return TorusModulus(0.0, 1.0)


@pytest.fixture(scope="session")
def grid64(square):
    return TorusGrid(square, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _minimizer(tau, n):
    mod = TorusModulus.from_complex(tau)
    t0 = time.perf_counter()
    grid = TorusGrid(mod, n)
    res = minimize_mass(grid, grid.constant(ewald_robin(mod)))
    TIMINGS[(tau, n)] = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def minimizer_i():
    return _minimizer(1j, 256)


@pytest.fixture(scope="session")
def minimizer_3i():
    return _minimizer(3j, 256)


@pytest.fixture(scope="session")
def minimizer_i_512():
    return _minimizer(1j, 512)


def sphere_counterexample(n_theta=48):
    """Unit-area sphere, constant m, log h = a·z tuned so Δlog h = 8π − 2K + 1 at the top node."""
    sq = SphereQuadrature(n_theta)
    z = sq.unit_vectors()[:, 2]
    a = 1.0 / (8 * math.pi * z.max())
    return MeanFieldProblem(sq, sq.field(np.exp(a * z)), sq.constant(ROBIN_UNIT_AREA))
