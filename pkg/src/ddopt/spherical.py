"""Spherical relaxation of the log-sensitivity and its analytic solution.

With the hypercube s_i = +-1 relaxed to the sphere sum_i y_i^2 = N, the
Lagrangian dual of

    E(y) = 1/2 y.J.y - log|h.y|

is a function of one multiplier lam,

    eps_sm(lam) = 1/2 - N lam / 2 - 1/2 log Q(lam),
    Q(lam) = sum_k h_k^2 / (mu_k + lam),

where (mu_k, h_k) are the eigenvalues of J and the projections of h on its
eigenvectors. eps_sm is concave on lam > -mu_min and its stationary point is
exactly where the minimizer y = (J + lam)^-1 h / D, D = sqrt(Q), lies on the
sphere. The value there bounds E(s) from below for every spin sequence.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .model import CouplingMatrix

# NV electron gyromagnetic ratio, 28 kHz/uT, in rad/(us uT)
DEFAULT_GAMMA = 2 * math.pi * 0.028


class DegenerateSignalError(ValueError):
    """The field has no usable overlap with the coupling eigenbasis."""


@dataclass(frozen=True, eq=False)
class Eigenbasis:
    """Eigen-decomposition of J, either exact or of its circulant extension.

    ``vectors`` holds orthonormal eigenvectors as columns in exact mode and
    is None in circulant mode, where the basis is the unitary DFT.
    """

    values: np.ndarray
    mode: str
    vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def approximate(self):
        return self.mode == "circulant"

    def project(self, h):
        h = np.asarray(h, dtype=float)
        if self.mode == "exact":
            return self.vectors.T @ h
        return np.fft.fft(h, norm="ortho")

    def synthesize(self, coef):
        if self.mode == "exact":
            return self.vectors @ coef
        return np.fft.ifft(coef, norm="ortho").real


def circulant_extension(first_row):
    """First column of the Frobenius-nearest circulant to the Toeplitz matrix
    (T. Chan's choice). Its eigenvalues are Rayleigh quotients of J on Fourier
    vectors, so it stays positive definite whenever J is."""
    r = np.asarray(first_row, dtype=float)
    n = len(r)
    k = np.arange(n)
    wrapped = np.concatenate([[0.0], r[:0:-1]])  # r[n - k] for k >= 1
    return ((n - k) * r + k * wrapped) / n


def diagonalize(J: CouplingMatrix, mode="exact") -> Eigenbasis:
    if mode == "exact":
        try:
            w, v = linalg.eigh(J.dense())
        except linalg.LinAlgError as exc:
            raise RuntimeError(f"eigendecomposition failed: {exc}") from exc
        return Eigenbasis(w, "exact", v)
    if mode == "circulant":
        w = np.fft.fft(circulant_extension(J.first_row)).real
        return Eigenbasis(w, "circulant")
    raise ValueError(f"unknown diagonalization mode {mode!r}")


def _dual_terms(basis, h):
    coef = basis.project(h)
    weights = np.abs(coef) ** 2
    return coef, weights


def epsilon_sm(lam, basis: Eigenbasis, h):
    """Dual function eps_sm(lam); raises for lam <= -mu_min."""
    mu_min = float(np.min(basis.values))
    if lam <= -mu_min:
        raise ValueError(f"lam={lam!r} not admissible: J + lam must be positive definite (mu_min={mu_min!r})")
    _, a = _dual_terms(basis, h)
    n = len(basis.values)
    q = float(np.sum(a / (basis.values + lam)))
    return 0.5 - 0.5 * n * lam - 0.5 * math.log(q)


@dataclass(frozen=True, eq=False)
class SphericalSolution:
    y: np.ndarray = field(repr=False)
    lam: float
    D: float
    epsilon_sm: float
    eta_sm: float | None = None
    mode: str = "exact"

    @property
    def constraint_residual(self):
        return abs(float(np.mean(self.y ** 2)) - 1.0)

    def to_dict(self):
        return {
            "y": [float(v) for v in self.y],
            "lambda": self.lam,
            "D": self.D,
            "epsilon_sm": self.epsilon_sm,
            "eta_sm": self.eta_sm,
            "mode": self.mode,
            "constraint_residual": self.constraint_residual,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["y"], dtype=float), d["lambda"], d["D"], d["epsilon_sm"],
                   d.get("eta_sm"), d.get("mode", "exact"))


def solve(h, J: CouplingMatrix, T=None, gamma=DEFAULT_GAMMA, mode="exact", basis=None):
    """Ground state of the spherical model for field ``h`` and couplings ``J``.

    Pass ``T`` (us) to also get the sensitivity bound eta_sm. A precomputed
    ``basis`` for the same J may be supplied to skip the eigendecomposition.
    """
    h = np.asarray(h, dtype=float)
    n = len(h)
    if J.N != n:
        raise ValueError(f"size mismatch: h has {n} entries, J is {J.N}x{J.N}")
    if not np.any(h):
        raise DegenerateSignalError("field vector is identically zero")
    if basis is None:
        basis = diagonalize(J, mode)
    coef, a = _dual_terms(basis, h)
    mu = basis.values
    mu_min = float(np.min(mu))
    keep = a > 0
    d = (mu - mu_min)[keep]
    a = a[keep]

    def excess(x):
        # |y(x)|^2 / N - 1, strictly decreasing in x = lam + mu_min
        r = a / (d + x)
        return float(np.sum(r / (d + x)) / np.sum(r)) / n - 1.0

    # |y|^2 <= 1/x, so x = 1/N is always at or beyond the root
    x_hi = 1.0 / n
    g_hi = excess(x_hi)
    if g_hi == 0.0:
        x_star = x_hi
    else:
        x_lo = x_hi
        for _ in range(400):
            x_lo *= 0.1
            if x_lo == 0.0 or excess(x_lo) > 0:
                break
        if x_lo == 0.0 or excess(x_lo) <= 0:
            raise DegenerateSignalError(
                "field has no weight on the softest noise mode and the spherical "
                "constraint cannot be met with J + lam positive definite")
        x_star = optimize.brentq(excess, x_lo, x_hi, xtol=1e-16 * x_lo, rtol=4 * np.finfo(float).eps,
                                 maxiter=500)
    denom = mu - mu_min + x_star
    q = float(np.sum(a / (d + x_star)))
    D = math.sqrt(q)
    full = np.where(np.abs(coef) > 0, coef / denom, 0.0)
    y = basis.synthesize(full) / D
    lam = x_star - mu_min
    eps = 0.5 - 0.5 * n * lam - 0.5 * math.log(q)
    eta = None if T is None else math.exp(eps) / (gamma * math.sqrt(T))
    return SphericalSolution(y=y, lam=lam, D=D, epsilon_sm=eps, eta_sm=eta, mode=basis.mode)


def project_to_hypercube(sol) -> np.ndarray:
    """s_i = sign(y_i) with sign(0) = +1."""
    y = sol.y if isinstance(sol, SphericalSolution) else np.asarray(sol)
    return np.where(y >= 0, 1, -1).astype(np.int8)
