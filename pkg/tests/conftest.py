import math

import numpy as np
import pytest

from hopfavg import averaging
from hopfavg.dde_core.kernel import MeasureKernel
from hopfavg.dde_core.spectral import build_spectral
from hopfavg.perturbation import DelayPolynomial, delay_monomial_perturbation

HALF_PI = math.pi / 2.0
N_CONST = 2.0 / (1.0 + HALF_PI**2)


def delay_kernel():
    """``x'(t) = -(pi/2) x(t - 1)``."""
    return MeasureKernel(1.0, ((-1.0, -HALF_PI),))


@pytest.fixture(scope="session")
def kernel():
    return delay_kernel()


@pytest.fixture(scope="session")
def spectral(kernel):
    return build_spectral(kernel)


@pytest.fixture(scope="session")
def additive_model(kernel, spectral):
    return averaging.average_additive(delay_monomial_perturbation(0.025), kernel, spectral)


@pytest.fixture(scope="session")
def mult_model(spectral):
    return averaging.average_multiplicative(MeasureKernel(1.0, ((-1.0, 1.0),)), spectral)


@pytest.fixture(scope="session")
def gq_square():
    return DelayPolynomial.monomial(1.0, -1.0, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
