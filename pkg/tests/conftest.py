import numpy as np
import pytest
from hypothesis import strategies as st

from shapesphere.core import MassDistribution, PhaseState

OMEGA = np.exp(2j * np.pi / 3)
LAGRANGE = np.array([1, OMEGA, OMEGA**2])

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
complexes = st.builds(complex, finite, finite)
configs = st.lists(complexes, min_size=3, max_size=3).map(np.array)
masses_st = st.tuples(*[st.floats(0.2, 5.0)] * 3).map(lambda t: MassDistribution(*t))
angles = st.floats(0, 2 * np.pi)


def separated(q, frac=0.05):
    r = np.abs([q[0] - q[1], q[1] - q[2], q[2] - q[0]])
    return r.min() > frac * max(r.max(), 1e-9) and r.max() > 1e-3


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_config(rng, scale=1.0):
    while True:
        q = scale * (rng.normal(size=3) + 1j * rng.normal(size=3))
        if separated(q, 0.1):
            return q


def random_state(rng):
    return PhaseState(random_config(rng), rng.normal(size=3) + 1j * rng.normal(size=3))


@pytest.fixture(scope="session")
def figure_eight():
    from shapesphere.action import find_figure_eight
    return find_figure_eight(N=512)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
