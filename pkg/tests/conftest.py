import numpy as np
import pytest
from scipy.stats import unitary_group

from entangler.core import DensityMatrix, PureState


def random_pure(rng) -> PureState:
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return PureState.normalized(v)


def random_density(rng, rank=4) -> DensityMatrix:
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityMatrix(0.5 * (m + m.conj().T))


def random_qubit_density(rng) -> np.ndarray:
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_local_unitary(rng) -> np.ndarray:
    return np.kron(unitary_group.rvs(2, random_state=rng), unitary_group.rvs(2, random_state=rng))


@pytest.fixture
def rng():
    return np.random.default_rng(20021)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
