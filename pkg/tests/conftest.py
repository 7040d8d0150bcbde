import pytest

from vrtpp.legs import init_cost_matrix
from vrtpp.scenario import case_study


@pytest.fixture(scope="session")
def case():
    return case_study()


@pytest.fixture(scope="session")
def case_matrix(case):
    return init_cost_matrix(case)
