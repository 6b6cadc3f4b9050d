"""Discretized sensing problem: field vector h_i and Toeplitz noise couplings J_ij.

Units throughout: time in us, linear frequency in MHz, angular frequency
omega = 2*pi*nu in rad/us, spectral densities in MHz. With these choices the
decoherence exponent chi and the field overlaps are dimensionless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, linalg

TWO_PI = 2.0 * math.pi


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


@dataclass(frozen=True)
class SignalSpec:
    """Multi-chromatic target field h(t) = sum_n A_n cos(2 pi nu_n t + phi_n).

    Frequencies are linear (MHz), phases in radians.
    """

    amplitudes: tuple
    frequencies: tuple
    phases: tuple
    normalized: bool = False

    def __post_init__(self):
        a = tuple(float(x) for x in self.amplitudes)
        f = tuple(float(x) for x in self.frequencies)
        p = tuple(float(x) for x in self.phases)
        if not (len(a) == len(f) == len(p)) or not a:
            raise ValueError("amplitudes, frequencies and phases must be non-empty and equally long")
        if any(x < 0 for x in a):
            raise ValueError("amplitudes must be non-negative")
        if any(x < 0 for x in f):
            raise ValueError("frequencies must be non-negative")
        if self.normalized and abs(sum(a) - 1.0) > 1e-9:
            raise ValueError(f"normalized signal needs sum(A) = 1, got {sum(a)!r}")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "phases", p)

    @classmethod
    def from_components(cls, components: Sequence[Sequence[float]], normalized=False):
        """Build from ``[(A, nu, phi), ...]`` triples."""
        comps = [tuple(c) for c in components]
        if not comps:
            raise ValueError("signal needs at least one component")
        a, f, p = zip(*comps)
        return cls(a, f, p, normalized)

    @property
    def components(self):
        return list(zip(self.amplitudes, self.frequencies, self.phases))

    def __call__(self, t):
        return evaluate_signal(self, t)


def evaluate_signal(spec: SignalSpec, t):
    """Return sum_n A_n cos(2 pi nu_n t + phi_n); ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for a, nu, phi in spec.components:
        out = out + a * np.cos(TWO_PI * nu * t + phi)
    return out if out.ndim else float(out)


# Trichromatic test signal used for the NV demonstration runs.
TRICHROMATIC_SIGNAL = SignalSpec(
    amplitudes=(0.288, 0.335, 0.377),
    frequencies=(0.1150, 0.2125, 0.1450),
    phases=(0.0, 0.0, 0.0),
    normalized=True,
)


@dataclass(frozen=True)
class Grid:
    """Time discretization t_i = i*dt, i = 1..N, with N*dt = T."""

    T: float
    dt: float

    def __post_init__(self):
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if n < 2:
            raise ValueError("grid needs N >= 2")

    @property
    def N(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def edges(self):
        return np.arange(self.N + 1) * self.dt

    @property
    def midpoints(self):
        return (np.arange(self.N) + 0.5) * self.dt


def build_field_vector(spec: SignalSpec, grid: Grid) -> np.ndarray:
    """h_i = (1/T) * integral of h(t) over bin i, in closed form.

    Per cosine component the bin integral is
    dt * sinc(nu dt) * cos(2 pi nu t_mid + phi), which is the difference of
    sines written without cancellation at small nu.
    """
    mid = grid.midpoints
    h = np.zeros(grid.N)
    for a, nu, phi in spec.components:
        h += a * np.sinc(nu * grid.dt) * np.cos(TWO_PI * nu * mid + phi)
    return h * (grid.dt / grid.T)


@dataclass(frozen=True)
class GaussianNoise:
    """S(omega) = S0 + A exp(-(omega - omega_L)^2 / (2 sigma^2)).

    Parameters are given as linear frequencies (MHz); ``omega_l`` and
    ``sigma`` are the angular versions. The white floor S0 extends to all
    frequencies and is integrated in closed form. The Gaussian peak is cut at
    ``omega_max`` (default omega_L + 10 sigma).
    """

    s0: float
    amplitude: float
    nu_l: float
    sigma_nu: float
    omega_max: float | None = None
    two_sided: bool = False

    def __post_init__(self):
        if self.s0 < 0 or self.amplitude < 0:
            raise ValueError("S0 and A must be non-negative")
        if self.amplitude > 0 and self.sigma_nu <= 0:
            raise ValueError("sigma must be positive")
        if self.omega_max is not None and self.amplitude > 0:
            if self.omega_max <= self.omega_l + 8 * self.sigma:
                raise ValueError("omega_max must exceed omega_L + 8 sigma")

    @property
    def omega_l(self):
        return TWO_PI * self.nu_l

    @property
    def sigma(self):
        return TWO_PI * self.sigma_nu

    @property
    def cutoff(self):
        if self.omega_max is not None:
            return float(self.omega_max)
        return self.omega_l + 10.0 * self.sigma

    def colored(self, omega):
        """Peak part of the spectrum, zero beyond the cutoff."""
        omega = np.asarray(omega, dtype=float)
        if self.amplitude == 0:
            return np.zeros_like(omega)
        g = self.amplitude * np.exp(-0.5 * ((omega - self.omega_l) / self.sigma) ** 2)
        return np.where(omega <= self.cutoff, g, 0.0)

    def segments(self):
        """Intervals covering the support of the colored part, split at the peak."""
        if self.amplitude == 0:
            return []
        lo = max(0.0, self.omega_l - 10.0 * self.sigma)
        hi = self.cutoff
        peak = self.omega_l
        if lo < peak < hi:
            return [(lo, peak), (peak, hi)]
        return [(lo, hi)]

    def __call__(self, omega):
        return evaluate_nsd(self, omega)


@dataclass(frozen=True)
class TabulatedNoise:
    """Linearly interpolated spectrum on ``omega`` (rad/us), zero outside the table.

    An optional white floor ``s0`` is added at all frequencies.
    """

    omega: tuple
    values: tuple
    s0: float = 0.0
    two_sided: bool = False

    def __post_init__(self):
        w = tuple(float(x) for x in self.omega)
        v = tuple(float(x) for x in self.values)
        if len(w) != len(v) or len(w) < 2:
            raise ValueError("tabulated NSD needs at least two (omega, S) points")
        if any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("tabulated omega must be strictly increasing")
        if w[0] < 0 or any(x < 0 for x in v) or self.s0 < 0:
            raise ValueError("tabulated NSD must be non-negative on omega >= 0")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", v)

    @property
    def cutoff(self):
        return self.omega[-1]

    def colored(self, omega):
        return np.interp(omega, self.omega, self.values, left=0.0, right=0.0)

    def segments(self):
        return [(a, b) for a, b in zip(self.omega, self.omega[1:])]

    def __call__(self, omega):
        return evaluate_nsd(self, omega)


NoiseSpec = GaussianNoise | TabulatedNoise

# NSD of an NV centre in a 13C bath at 403.2 G: white floor plus a Gaussian
# peak at the 13C Larmor frequency. The peak width is taken in MHz.
NV_BATH_NOISE = GaussianNoise(s0=0.00119, amplitude=0.52, nu_l=0.4316, sigma_nu=0.0042)


def evaluate_nsd(spec, omega):
    """S(omega) in MHz for omega >= 0 (rad/us)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("NSD is one-sided: omega must be >= 0")
    out = spec.s0 + spec.colored(w)
    return out if out.ndim else float(out)


def load_tabulated_csv(path, s0=0.0, linear_frequency=False, two_sided=False):
    """Read a two-column CSV (omega or nu, S). ``linear_frequency`` means the
    first column is nu in MHz and is converted to rad/us."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if lines:
        try:
            float(lines[0].split(",")[0])
        except ValueError:
            lines = lines[1:]  # header row
    data = np.loadtxt(lines, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, got {data.shape[1]}")
    w = data[:, 0] * (TWO_PI if linear_frequency else 1.0)
    return TabulatedNoise(tuple(w), tuple(data[:, 1]), s0=s0, two_sided=two_sided)


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Symmetric Toeplitz matrix J_ij = first_row[|i - j|]."""

    first_row: np.ndarray = field(repr=False)

    def __post_init__(self):
        row = np.array(self.first_row, dtype=float)
        row.setflags(write=False)
        object.__setattr__(self, "first_row", row)

    @property
    def N(self):
        return len(self.first_row)

    def __call__(self, i, j):
        return self.first_row[abs(i - j)]

    def dense(self):
        return linalg.toeplitz(self.first_row)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if len(x) != self.N:
            raise ValueError(f"size mismatch: J is {self.N}x{self.N}, vector has {len(x)}")
        if self.N < 64:
            return self.dense() @ x
        return linalg.matmul_toeplitz(self.first_row, x)

    def quadratic_form(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.matvec(x))


def _kernel_weight(omega, dt):
    # 2 sin^2(omega dt / 2) / omega^2 == [1 - cos(omega dt)] / omega^2, finite at 0
    return 0.5 * dt * dt * np.sinc(omega * dt / TWO_PI) ** 2


def build_coupling_matrix(noise, grid: Grid, epsrel=1e-10) -> CouplingMatrix:
    """first_row[k] = (4/pi) int dw [1 - cos(w dt)]/w^2 cos(w k dt) S(w).

    The white floor contributes exactly 2*S0*dt to k = 0. The colored part is
    integrated for all k at once with vector-valued adaptive Gauss-Kronrod;
    the initial subdivision resolves the fastest oscillation pi/T and the
    peak (or table nodes) are breakpoints.
    """
    n, dt = grid.N, grid.dt
    weight = 2.0 if noise.two_sided else 1.0
    row = np.zeros(n)
    row[0] = weight * 2.0 * noise.s0 * dt
    lags = np.arange(n) * dt
    pref = weight * 4.0 / math.pi

    def integrand(w):
        return pref * _kernel_weight(w, dt) * noise.colored(w) * np.cos(w * lags)

    for a, b in noise.segments():
        if b <= a:
            continue
        m = max(1, int(math.ceil((b - a) * grid.T / math.pi)))
        pts = np.linspace(a, b, m + 1)[1:-1]
        val, err, info = integrate.quad_vec(
            integrand, a, b, epsabs=0.0, epsrel=epsrel, norm="max",
            points=pts if len(pts) else None, limit=max(2000, 4 * m), full_output=True,
        )
        if not info.success:
            bad = int(np.argmax(np.abs(np.sum(info.errors, axis=0)))) if np.ndim(info.errors) > 1 else n - 1
            raise QuadratureError(
                f"coupling quadrature on [{a:.6g}, {b:.6g}] did not converge "
                f"(rtol={epsrel:g}); worst lag k={bad}", k=bad)
        row += val
    return CouplingMatrix(row)


def white_noise(s0, two_sided=False):
    """Flat spectrum S(omega) = S0."""
    return GaussianNoise(s0=s0, amplitude=0.0, nu_l=0.0, sigma_nu=0.0, two_sided=two_sided)
