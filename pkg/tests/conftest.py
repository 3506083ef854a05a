import numpy as np
import pytest

from dfgconv import quantum as qc
from dfgconv.config import load_config

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def phi_plus():
    return qc.pure_density(qc.bell_phi_plus())


def uhlmann_fidelity(rho, sigma):
    """Independent mixed-state fidelity via eigendecomposition square roots."""
    w, v = np.linalg.eigh(rho)
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sq @ sigma @ sq
    ev = np.clip(np.linalg.eigvalsh((m + m.conj().T) / 2), 0, None)
    return float(np.sum(np.sqrt(ev)) ** 2)


def trace_distance(a, b):
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
