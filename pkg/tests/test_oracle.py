import numpy as np
import pytest

from ddopt.anneal import energy
from ddopt.oracle import all_states, brute_force_min, naive_energy

from conftest import random_psd_toeplitz


def test_all_states_cover_orbits():
    S = all_states(5)
    assert S.shape == (16, 5)
    assert np.all(S[:, 0] == 1)
    assert len({tuple(r) for r in S}) == 16


def test_naive_energy_agrees():
    rng = np.random.default_rng(0)
    n = 9
    row = random_psd_toeplitz(rng, n)
    h = rng.normal(size=n)
    for _ in range(20):
        s = rng.choice([-1, 1], n)
        assert naive_energy(s, h, row, K=0.1) == pytest.approx(energy(s, h, row, K=0.1), rel=1e-12)


def test_brute_force_is_minimum():
    rng = np.random.default_rng(1)
    n = 10
    row = random_psd_toeplitz(rng, n)
    h = rng.normal(size=n)
    res = brute_force_min(h, row)
    assert res.evaluated_count == 2 ** (n - 1)
    assert res.best_epsilon == pytest.approx(naive_energy(res.best_s, h, row))
    for _ in range(200):
        s = rng.choice([-1, 1], n)
        assert naive_energy(s, h, row) >= res.best_epsilon - 1e-12


def test_cap():
    with pytest.raises(ValueError):
        brute_force_min(np.ones(21), np.eye(21)[0])
