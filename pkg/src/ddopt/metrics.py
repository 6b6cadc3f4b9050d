"""Figures of merit for a dynamical-decoupling sequence.

phase, decoherence chi, log-sensitivity eps, sensitivity eta, the Ramsey
population P(T, b), the filter function |Y(T, w)|^2, Fisher information, and
the cosine fit that turns measured P(b) curves back into (chi, phi/b).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .model import CouplingMatrix, Grid
from .spherical import DEFAULT_GAMMA


@dataclass(frozen=True, eq=False)
class SpinSequence:
    """Modulation function y(t) = s_i on bin [(i-1) dt, i dt]."""

    spins: np.ndarray = field(repr=False)
    grid: Grid

    def __post_init__(self):
        s = np.asarray(self.spins)
        if s.ndim != 1 or len(s) != self.grid.N:
            raise ValueError(f"expected {self.grid.N} spins, got shape {s.shape}")
        if not np.all((s == 1) | (s == -1)):
            raise ValueError("spins must be exactly +-1")
        s = s.astype(np.int8)
        s.setflags(write=False)
        object.__setattr__(self, "spins", s)

    @property
    def N(self):
        return self.grid.N

    @property
    def wall_indices(self):
        """0-based i with s_i != s_{i+1}; the pulse sits at (i + 1) dt."""
        return np.flatnonzero(self.spins[:-1] != self.spins[1:])

    @property
    def pulse_times(self):
        return (self.wall_indices + 1) * self.grid.dt

    @property
    def pulse_count(self):
        return len(self.wall_indices)

    def __neg__(self):
        return SpinSequence(-self.spins, self.grid)


def _spins(s):
    return s.spins if isinstance(s, SpinSequence) else np.asarray(s)


def phase(seq: SpinSequence, h, gamma=DEFAULT_GAMMA, b=1.0):
    """phi = T gamma b sum_i h_i s_i (rad)."""
    s = _spins(seq).astype(float)
    h = np.asarray(h, dtype=float)
    if len(s) != len(h):
        raise ValueError(f"length mismatch: {len(s)} spins vs {len(h)} field entries")
    return seq.grid.T * gamma * b * float(h @ s)


def decoherence(seq, J: CouplingMatrix):
    """chi = 1/2 s.J.s."""
    s = _spins(seq).astype(float)
    if len(s) != J.N:
        raise ValueError(f"size mismatch: {len(s)} spins vs J of size {J.N}")
    return 0.5 * J.quadratic_form(s)


def log_sensitivity(seq, h, J: CouplingMatrix):
    """eps = 1/2 s.J.s - log|sum h_i s_i|, +inf for zero overlap."""
    s = _spins(seq).astype(float)
    overlap = float(np.asarray(h, dtype=float) @ s)
    if overlap == 0.0:
        return math.inf
    return decoherence(s, J) - math.log(abs(overlap))


def sensitivity(chi, phase_per_field, T):
    """eta = e^chi sqrt(T) / |phi/b|; +inf when no phase is accumulated."""
    if T <= 0:
        raise ValueError("T must be positive")
    if phase_per_field == 0:
        return math.inf
    return math.exp(chi) * math.sqrt(T) / abs(phase_per_field)


def population(chi, phi):
    """Ramsey excited-state population P = (1 + e^-chi cos phi) / 2."""
    return 0.5 * (1.0 + np.exp(-np.asarray(chi)) * np.cos(phi))


def fisher_information(phi, chi, b, n_meas=1, slope_detection=True):
    """Fisher information on b from ``n_meas`` independent Ramsey shots."""
    if b == 0:
        raise ZeroDivisionError("Fisher information on b needs b != 0")
    if slope_detection:
        return n_meas * 8.0 * phi ** 2 * math.exp(-2.0 * chi) / b ** 2
    c2 = math.exp(-2.0 * chi)
    num = c2 * math.sin(phi) ** 2
    den = 1.0 - c2 * math.cos(phi) ** 2
    if den == 0.0:
        return math.inf
    return n_meas * 8.0 * phi ** 2 / b ** 2 * num / den


# --- filter function ---------------------------------------------------------

def _jumps(seq):
    """Times and signed jumps of y(t) on [0, T], including the two ends.

    Y(T, w) = sum_k c_k exp(-i w t_k) with c_k = y(t_k+) - y(t_k-), y = 0
    outside [0, T].
    """
    s = _spins(seq).astype(float)
    walls = np.flatnonzero(s[:-1] != s[1:])
    t = np.concatenate([[0.0], (walls + 1) * seq.grid.dt, [seq.grid.T]])
    c = np.concatenate([[s[0]], s[walls + 1] - s[walls], [-s[-1]]])
    return t, c


def filter_function(seq: SpinSequence, omega):
    """|Y(T, w)|^2 with Y = i w int_0^T e^{-i w t} y(t) dt, closed form."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega must be >= 0")
    t, c = _jumps(seq)
    y = np.exp(-1j * np.multiply.outer(w, t)) @ c
    out = np.abs(y) ** 2
    return out if out.ndim else float(out)


def filter_function_from_pulses(pulse_times, T, omega, first_sign=1):
    """Same as :func:`filter_function` for arbitrary (off-grid) pulse times."""
    p = np.asarray(pulse_times, dtype=float)
    t = np.concatenate([[0.0], p, [T]])
    signs = first_sign * (-1.0) ** np.arange(len(p) + 1)
    c = np.concatenate([[signs[0]], np.diff(signs), [-signs[-1]]])
    w = np.asarray(omega, dtype=float)
    out = np.abs(np.exp(-1j * np.multiply.outer(w, t)) @ c) ** 2
    return out if out.ndim else float(out)


def _oscillatory_quad(f, a, b, T, epsrel, what):
    m = max(1, int(math.ceil((b - a) * T / math.pi)))
    pts = np.linspace(a, b, m + 1)[1:-1]
    val, err, info = integrate.quad_vec(f, a, b, epsabs=0.0, epsrel=epsrel,
                                        points=pts if len(pts) else None,
                                        limit=max(2000, 4 * m), full_output=True)
    if not info.success:
        raise RuntimeError(f"{what}: quadrature did not converge on [{a:.6g}, {b:.6g}]")
    return float(val)


def chi_continuous(seq: SpinSequence, noise, epsrel=1e-9):
    """chi = (1/pi) int_0^inf S(w) |Y(T, w)|^2 / w^2 dw.

    The white floor gives exactly S0*T (the filter function integrates to
    pi*T); the colored part is integrated numerically over its support.
    """
    T = seq.grid.T
    weight = 2.0 if noise.two_sided else 1.0
    t, c = _jumps(seq)

    def integrand(w):
        y = np.exp(-1j * w * t) @ c
        return noise.colored(w) * (y.real ** 2 + y.imag ** 2) / (w * w)

    total = noise.s0 * T
    for a, b in noise.segments():
        a = max(a, 1e-12)
        if b > a:
            total += _oscillatory_quad(integrand, a, b, T, epsrel, "chi_continuous") / math.pi
    return weight * total


def parseval_integral(seq: SpinSequence, epsrel=1e-10):
    """(1/pi) int_0^inf |Y|^2 / w^2 dw evaluated numerically (should equal T).

    Quadrature on [0, W] with W = 2 pi / dt; the tail beyond W is summed in
    closed form from int_W^inf cos(d w) / w^2 dw.
    """
    T, dt = seq.grid.T, seq.grid.dt
    t, c = _jumps(seq)
    W = 2 * math.pi / dt

    def integrand(w):
        if w < 1e-6:
            # |Y|^2 / w^2 -> (int y dt)^2 at small w
            return float(np.sum(c * t)) ** 2
        y = np.exp(-1j * w * t) @ c
        return (y.real ** 2 + y.imag ** 2) / (w * w)

    head = _oscillatory_quad(integrand, 0.0, W, T, epsrel, "parseval")
    d = np.abs(np.subtract.outer(t, t))
    si, _ = special.sici(d * W)
    tail_kernel = np.cos(d * W) / W - d * (math.pi / 2 - si)
    tail = float(c @ tail_kernel @ c)
    return (head + tail) / math.pi


# --- records -------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    T: float
    dt: float
    n_pulses: int
    phase_per_field: float
    chi: float
    epsilon: float
    eta: float
    eta_sm_ratio: float | None = None

    CSV_COLUMNS = ("T", "dt", "n_pulses", "phase_per_field", "chi", "epsilon", "eta", "eta_sm_ratio")

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def csv_row(self):
        d = self.to_dict()
        return ["" if d[k] is None else repr(d[k]) for k in self.CSV_COLUMNS]


def evaluate(seq: SpinSequence, h, J: CouplingMatrix, gamma=DEFAULT_GAMMA, epsilon_sm=None) -> Metrics:
    """All metrics of ``seq``; ``epsilon_sm`` adds the ratio eta_SM / eta."""
    T = seq.grid.T
    chi = decoherence(seq, J)
    ppf = phase(seq, h, gamma, 1.0)
    eps = log_sensitivity(seq, h, J)
    eta = math.exp(eps) / (gamma * math.sqrt(T)) if eps != math.inf else math.inf
    ratio = None
    if epsilon_sm is not None:
        ratio = math.exp(epsilon_sm - eps) if eps != math.inf else 0.0
    return Metrics(T, seq.grid.dt, seq.pulse_count, ppf, chi, eps, eta, ratio)


# --- cosine fit ----------------------------------------------------------------

@dataclass(frozen=True)
class PopulationSample:
    b: float
    P: float
    sigma_P: float

    def __post_init__(self):
        if not 0.0 <= self.P <= 1.0:
            raise ValueError(f"population {self.P} outside [0, 1]")
        if self.sigma_P <= 0:
            raise ValueError("sigma_P must be positive")


@dataclass(frozen=True)
class FitResult:
    chi: float
    phase_per_field: float
    chi_err: float
    phase_per_field_err: float
    covariance: tuple
    eta: float
    eta_err: float
    chi2: float


class FitError(RuntimeError):
    pass


def _population_model(b, chi, k):
    return 0.5 * (1.0 + np.exp(-chi) * np.cos(k * b))


def _population_jac(b, chi, k):
    e = 0.5 * np.exp(-chi)
    return np.column_stack([-e * np.cos(k * b), -e * b * np.sin(k * b)])


def fit_population_curve(samples, T, max_iter=2000) -> FitResult:
    """Weighted least-squares fit of P(b) = (1 + e^-chi cos(k b)) / 2.

    The frequency k = phi/b is seeded from a scan of the profiled residual
    (the amplitude is linear for fixed k), which avoids the side minima of a
    cosine fit.
    """
    b = np.array([s.b for s in samples], dtype=float)
    P = np.array([s.P for s in samples], dtype=float)
    sig = np.array([s.sigma_P for s in samples], dtype=float)
    if len(b) < 5:
        raise ValueError("need at least 5 samples")
    span = float(np.max(np.abs(b)))
    if np.ptp(b) == 0 or span == 0:
        raise ValueError("degenerate data: all b equal")

    z = 2 * P - 1
    wts = 1.0 / (2 * sig) ** 2
    gaps = np.diff(np.sort(b))
    gaps = gaps[gaps > 1e-9 * span]
    # Nyquist limit of the typical sampling step
    k_hi = math.pi / float(np.median(gaps)) if len(gaps) else math.pi / span
    ks = np.linspace(0.25 * math.pi / span, k_hi, 4000)
    best = None
    for k in ks:
        cb = np.cos(k * b)
        den = float(np.sum(wts * cb * cb))
        if den == 0:
            continue
        amp = float(np.sum(wts * cb * z)) / den
        if amp <= 0:
            continue
        r = float(np.sum(wts * (z - amp * cb) ** 2))
        if best is None or r < best[0]:
            best = (r, k, amp)
    if best is None:
        raise FitError("no positive-amplitude cosine matches the data")
    _, k0, a0 = best
    chi0 = -math.log(min(max(a0, 1e-12), 1.0))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            popt, _ = optimize.curve_fit(
                _population_model, b, P, p0=(chi0, k0), sigma=sig, absolute_sigma=True, jac=_population_jac,
                maxfev=max_iter, xtol=1e-15, ftol=1e-15, gtol=1e-15,
            )
    except RuntimeError as exc:
        raise FitError(f"population fit did not converge: {exc}") from exc
    chi, k = float(popt[0]), abs(float(popt[1]))
    # (J^T W J)^-1 at the optimum; curve_fit skips it when p0 is already exact
    jw = _population_jac(b, *popt) / sig[:, None]
    try:
        pcov = np.linalg.inv(jw.T @ jw)
    except np.linalg.LinAlgError:
        raise FitError("population fit covariance is singular") from None
    if not np.all(np.isfinite(pcov)):
        raise FitError("population fit covariance is not finite")
    chi_err, k_err = math.sqrt(pcov[0, 0]), math.sqrt(pcov[1, 1])
    eta = sensitivity(chi, k, T)
    # d ln eta = d chi - d k / k
    var_ln = pcov[0, 0] + pcov[1, 1] / k ** 2 - 2 * np.sign(popt[1]) * pcov[0, 1] / k
    eta_err = eta * math.sqrt(max(var_ln, 0.0))
    resid = (P - _population_model(b, *popt)) / sig
    return FitResult(chi, k, chi_err, k_err, tuple(map(tuple, pcov.tolist())), eta, eta_err,
                     float(resid @ resid))
