import sys

import numpy as np
import pytest

from sturmspec.config import coupled_fourier, preset
from sturmspec.model import SelfAdjointProblem, asymptotic_constants
from sturmspec.potentials import ConstantHermitian, Zero
from sturmspec.spectrum import locate_spectrum
from sturmspec.weights import compute_weight_sums


class Solved:
    """A problem with its constants, spectrum and weight sums."""

    def __init__(self, spec, N, with_weights=True):
        self.spec = spec
        self.N = N
        self.constants = asymptotic_constants(spec)
        self.table = locate_spectrum(spec, N, constants=self.constants)
        self.sums = compute_weight_sums(spec, self.table, self.constants) if with_weights else None


def herm(rng, m):
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return 0.5 * (a + a.conj().T)


def random_unitary(rng, m):
    q, r = np.linalg.qr(rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture(scope="session")
def q0_problem():
    return SelfAdjointProblem(np.diag([1.0, 0, 0]), np.zeros((3, 3)), Zero(3))


@pytest.fixture(scope="session")
def diag2_problem():
    return SelfAdjointProblem(np.diag([1.0, 0]), np.zeros((2, 2)), ConstantHermitian(np.diag([0.6, -0.4])))


@pytest.fixture(scope="session")
def coupled3_problem():
    return SelfAdjointProblem(np.diag([1.0, 0, 0]), np.zeros((3, 3)), coupled_fourier())


@pytest.fixture(scope="session")
def q0_solved(q0_problem):
    return Solved(q0_problem, 30)


@pytest.fixture(scope="session")
def diag2_solved(diag2_problem):
    return Solved(diag2_problem, 40)


@pytest.fixture(scope="session")
def coupled3_solved(coupled3_problem):
    return Solved(coupled3_problem, 40)


@pytest.fixture(scope="session")
def star_delta():
    return preset("star-delta").graph


@pytest.fixture(scope="session")
def star_deltaprime():
    return preset("star-deltaprime").graph


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
