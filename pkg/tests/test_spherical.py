import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddopt.anneal import energy
from ddopt.model import NV_BATH_NOISE, TRICHROMATIC_SIGNAL, CouplingMatrix, Grid, build_coupling_matrix, build_field_vector
from ddopt.oracle import brute_force_min
from ddopt.spherical import (DegenerateSignalError, SphericalSolution, circulant_extension, diagonalize,
                             epsilon_sm, project_to_hypercube, solve)

from conftest import random_psd_toeplitz

# Minimum of 1/2 yJy - log|h.y| on |y|^2 = N for the default trichromatic
# problem at T = 32 us, dt = 0.16 us, found independently with SLSQP.
SLSQP_EPS_SM = 0.9000458906518559


def _random_problem(seed, n):
    rng = np.random.default_rng(seed)
    return rng.normal(size=n), CouplingMatrix(random_psd_toeplitz(rng, n))


def test_matches_constrained_minimizer(tri_h, tri_J):
    sol = solve(tri_h, tri_J, T=32.0)
    assert sol.epsilon_sm == pytest.approx(SLSQP_EPS_SM, abs=1e-12)
    assert sol.eta_sm == pytest.approx(math.exp(sol.epsilon_sm) / (2 * math.pi * 0.028 * math.sqrt(32)))


@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 80))
def test_saddle_point_equations(seed, n):
    h, J = _random_problem(seed, n)
    sol = solve(h, J)
    assert abs(sol.y @ sol.y / n - 1) < 1e-12
    assert sol.D == pytest.approx(h @ sol.y, rel=1e-10)
    lhs = J.dense() @ sol.y + sol.lam * sol.y
    np.testing.assert_allclose(lhs, h / sol.D, atol=1e-9 * np.abs(h / sol.D).max())
    # the value of the relaxed energy at y equals the dual optimum
    assert energy_on_sphere(sol.y, h, J) == pytest.approx(sol.epsilon_sm, abs=1e-9)


def energy_on_sphere(y, h, J):
    return 0.5 * J.quadratic_form(y) - math.log(abs(h @ y))


@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 60))
def test_dual_is_maximized(seed, n):
    h, J = _random_problem(seed, n)
    sol = solve(h, J)
    basis = diagonalize(J)
    for d in (1e-3, 1e-5):
        assert epsilon_sm(sol.lam, basis, h) >= epsilon_sm(sol.lam + d, basis, h) - 1e-12
        if sol.lam - d > -basis.values.min():
            assert epsilon_sm(sol.lam, basis, h) >= epsilon_sm(sol.lam - d, basis, h) - 1e-12


@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 40))
def test_sphere_points_never_beat_the_bound(seed, n):
    h, J = _random_problem(seed, n)
    sol = solve(h, J)
    rng = np.random.default_rng(seed + 1)
    for _ in range(50):
        y = sol.y + rng.normal(scale=rng.uniform(0.01, 2), size=n)
        y *= math.sqrt(n) / np.linalg.norm(y)
        assert energy_on_sphere(y, h, J) >= sol.epsilon_sm - 1e-10


@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(0.01, 100))
def test_scale_covariance(seed, c):
    h, J = _random_problem(seed, 30)
    a, b = solve(h, J), solve(c * h, J)
    np.testing.assert_allclose(b.y, a.y, atol=1e-8)
    assert b.epsilon_sm == pytest.approx(a.epsilon_sm - math.log(c), abs=1e-9)


def test_white_noise_gives_field_direction():
    rng = np.random.default_rng(5)
    h = rng.normal(size=40)
    row = np.zeros(40)
    row[0] = 0.2
    sol = solve(h, CouplingMatrix(row))
    np.testing.assert_allclose(sol.y, h * math.sqrt(40) / np.linalg.norm(h), atol=1e-10)


@pytest.mark.parametrize("seed", range(8))
def test_bound_below_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 17))
    h, J = _random_problem(seed, n)
    assert solve(h, J).epsilon_sm <= brute_force_min(h, J).best_epsilon + 1e-12


def test_degenerate_field():
    J = CouplingMatrix(np.r_[1.0, np.zeros(9)])
    with pytest.raises(DegenerateSignalError):
        solve(np.zeros(10), J)


def test_circulant_extension_is_psd_and_close():
    rng = np.random.default_rng(0)
    row = random_psd_toeplitz(rng, 50, white=0.01)
    c = circulant_extension(row)
    assert np.fft.fft(c).real.min() > 0
    for T in (16.0, 32.0, 64.0, 128.0):
        g = Grid(T, 0.16)
        J = build_coupling_matrix(NV_BATH_NOISE, g)
        h = build_field_vector(TRICHROMATIC_SIGNAL, g)
        exact, circ = solve(h, J), solve(h, J, mode="circulant")
        assert abs(circ.epsilon_sm - exact.epsilon_sm) < 0.02
        assert circ.mode == "circulant"
        assert abs(circ.y @ circ.y / g.N - 1) < 1e-10


def test_projection_and_serialization(tri_h, tri_J):
    sol = solve(tri_h, tri_J, T=32.0)
    s = project_to_hypercube(sol)
    assert s.dtype == np.int8 and set(np.unique(s)) <= {-1, 1}
    assert project_to_hypercube(np.array([0.0, -1e-300]))[0] == 1
    back = SphericalSolution.from_dict(json.loads(sol.to_json()))
    np.testing.assert_array_equal(back.y, sol.y)
    assert back.epsilon_sm == sol.epsilon_sm
    assert epsilon_sm(sol.lam, diagonalize(tri_J), tri_h) == pytest.approx(sol.epsilon_sm, abs=1e-12)
    with pytest.raises(ValueError):
        epsilon_sm(-10.0, diagonalize(tri_J), tri_h)
