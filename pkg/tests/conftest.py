import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cheshire.linalg import SYSTEM, LabeledOperator, LabeledState  # noqa: E402
from cheshire.scenario import load_scenario  # noqa: E402


def random_amplitudes(rng, dim):
    return rng.normal(size=dim) + 1j * rng.normal(size=dim)


def random_ket(rng, space=SYSTEM):
    return LabeledState(space, random_amplitudes(rng, space.dim), "ket")


def random_bra(rng, space=SYSTEM):
    return LabeledState(space, random_amplitudes(rng, space.dim), "bra")


def random_operator(rng, space=SYSTEM, hermitian=False):
    m = random_amplitudes(rng, space.dim * space.dim).reshape(space.dim, space.dim)
    if hermitian:
        m = (m + m.conj().T) / 2
    return LabeledOperator(space, m)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def partial_scn():
    return load_scenario("partial_cat")


@pytest.fixture(scope="session")
def complete_scn():
    return load_scenario("complete_cat")
