import numpy as np
import pytest
from hypothesis import settings

from ddopt.model import NV_BATH_NOISE, TRICHROMATIC_SIGNAL, Grid, build_coupling_matrix, build_field_vector

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def tri_grid():
    return Grid(32.0, 0.16)


@pytest.fixture(scope="session")
def tri_J(tri_grid):
    return build_coupling_matrix(NV_BATH_NOISE, tri_grid)


@pytest.fixture(scope="session")
def tri_h(tri_grid):
    return build_field_vector(TRICHROMATIC_SIGNAL, tri_grid)


def random_psd_toeplitz(rng, n, white=0.05):
    """First row of a PSD Toeplitz matrix: random positive spectrum at a few
    frequencies plus a white floor."""
    k = np.arange(n)
    freqs = rng.uniform(0, np.pi, 4)
    weights = rng.uniform(0.01, 0.3, 4)
    row = sum(w * np.cos(f * k) for w, f in zip(weights, freqs))
    row[0] += white
    return row


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
