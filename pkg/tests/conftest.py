from fractions import Fraction

import pytest

from coaglab import ConcentrationState, OneFemaleArm, RandomGender, TwoGender
from coaglab.measures import Measure1D


@pytest.fixture(scope="session")
def fam_one_female():
    """Every particle has one male and one female arm."""
    return OneFemaleArm(Measure1D.delta(1))


@pytest.fixture(scope="session")
def fam_random_gender():
    """Two arms per particle, genders i.i.d. uniform."""
    return RandomGender(Measure1D.delta(2))


@pytest.fixture(scope="session")
def fam_two_gender():
    """Single-arm, single-gender particles (pair annihilation)."""
    return TwoGender(Measure1D.delta(1), Measure1D.delta(1))


@pytest.fixture(scope="session")
def three_arm_state():
    """Three same-gender arms per particle; gels at T_c = 1."""
    return ConcentrationState({(3, 0, 1): Fraction(1, 3), (0, 3, 1): Fraction(1, 3)})


@pytest.fixture(scope="session")
def pq_state():
    """Mixed family with atoms (1,0), (0,1), (1,1), p = q = 1/2."""
    p = Fraction(1, 2)
    return ConcentrationState({(1, 0, 1): p, (0, 1, 1): p, (1, 1, 1): p})
