"""Shared fixtures: parameter sets and equilibria reused across the suite."""
import pytest

from fraclimit.model import ModelParams, make_default_equilibrium


@pytest.fixture(scope="session")
def p75():
    return ModelParams(d=1, s=0.75, nu0=1.0)


@pytest.fixture(scope="session")
def eq75(p75):
    return make_default_equilibrium(p75)


@pytest.fixture(scope="session")
def p60():
    return ModelParams(d=1, s=0.6, nu0=1.0)


@pytest.fixture(scope="session")
def eq60(p60):
    return make_default_equilibrium(p60)
