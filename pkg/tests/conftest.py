import pytest

from subriemann.Models import builtin

@pytest.fixture(scope="session")
def heisenberg1():
    return builtin("heisenberg-1")

@pytest.fixture(scope="session")
def heisenberg2():
    return builtin("heisenberg-2")

@pytest.fixture(scope="session")
def engel():
    return builtin("engel")

@pytest.fixture(scope="session")
def perturbed():
    return builtin("perturbed-heisenberg")
