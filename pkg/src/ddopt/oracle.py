"""Brute-force references for tests: exhaustive minimization, naive energies.

Nothing here reuses the cached engine in :mod:`ddopt.anneal`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_BRUTE_FORCE_N = 20


def _dense(J):
    row = getattr(J, "first_row", None)
    if row is None:
        arr = np.asarray(J, dtype=float)
        if arr.ndim == 2:
            return arr
        row = arr
    n = len(row)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = row[abs(i - j)]
    return out


def naive_energy(s, h, J, K=0.0):
    """Double-loop evaluation of 1/2 sum J_ij s_i s_j - log|sum h_i s_i| - K sum s_i s_{i+1}."""
    Jd = _dense(J)
    n = len(s)
    quad = 0.0
    for i in range(n):
        for j in range(n):
            quad += Jd[i, j] * s[i] * s[j]
    overlap = 0.0
    for i in range(n):
        overlap += h[i] * s[i]
    bonds = 0.0
    for i in range(n - 1):
        bonds += s[i] * s[i + 1]
    if overlap == 0.0:
        return math.inf
    return 0.5 * quad - math.log(abs(overlap)) - K * bonds


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    best_s: np.ndarray = field(repr=False)
    best_epsilon: float
    evaluated_count: int


def all_states(n):
    """Every chain with s_1 = +1, one per global-flip orbit (2^(n-1) rows)."""
    codes = np.arange(2 ** (n - 1), dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n - 1)[None, :]) & 1
    rest = 1 - 2 * bits
    return np.hstack([np.ones((len(codes), 1), dtype=np.int64), rest]).astype(np.int8)


def brute_force_min(h, J, K=0.0, chunk=1 << 14) -> BruteForceResult:
    """Exact minimum over the hypercube, O(N^2) per state."""
    h = np.asarray(h, dtype=float)
    n = len(h)
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"brute force capped at N = {MAX_BRUTE_FORCE_N}, got {n}")
    Jd = _dense(J)
    states = all_states(n).astype(float)
    best_e, best_i = math.inf, 0
    for start in range(0, len(states), chunk):
        S = states[start:start + chunk]
        quad = np.einsum("ci,ij,cj->c", S, Jd, S)
        ov = np.abs(S @ h)
        bonds = np.sum(S[:, :-1] * S[:, 1:], axis=1)
        with np.errstate(divide="ignore"):
            e = 0.5 * quad - np.log(ov) - K * bonds
        e[ov == 0] = math.inf
        i = int(np.argmin(e))
        if e[i] < best_e:
            best_e, best_i = float(e[i]), start + i
    return BruteForceResult(states[best_i].astype(np.int8), best_e, len(states))
