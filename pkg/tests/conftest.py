import numpy as np
from hypothesis import strategies as st

from qzeno import ModelParams, NoiseCovariance

REF = NoiseCovariance(g11=0.05, g22=0.1, g33=1.0, g23=0.3)
REF_DIAG = NoiseCovariance.diagonal(0.05, 0.1, 1.0)


def random_gamma(rng, scale=0.5, decoupled=True, diagonal=False):
    """PSD covariance; with ``decoupled`` the x axis is uncorrelated (g12 = g13 = 0)."""
    if diagonal:
        return NoiseCovariance.diagonal(*rng.uniform(0, scale, 3))
    if decoupled:
        g11, g22, g33 = rng.uniform(0, scale, 3)
        return NoiseCovariance(g11, g22, g33, g23=rng.uniform(-1, 1) * np.sqrt(g22 * g33))
    a = rng.normal(size=(3, 3)) * np.sqrt(scale / 3)
    return NoiseCovariance.from_matrix(a @ a.T)


@st.composite
def decoupled_params(draw, max_noise=0.5, max_alpha=20.0):
    g11 = draw(st.floats(0, max_noise))
    g22 = draw(st.floats(0, max_noise))
    g33 = draw(st.floats(0, max_noise))
    rho = draw(st.floats(-1, 1))
    omega = draw(st.floats(0.2, 2.0))
    alpha = draw(st.floats(0, max_alpha))
    return ModelParams(omega, alpha, NoiseCovariance(g11, g22, g33, g23=rho * np.sqrt(g22 * g33)))


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
