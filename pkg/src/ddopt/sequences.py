"""Baseline sequences (CP, gCP), spin <-> pulse-time conversion, pulse files.

CP timing follows the usual CPMG convention: n pulses at (k - 1/2) tau,
k = 1..n, so T = n tau. Pulses are ideal and instantaneous.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .metrics import SpinSequence
from .model import Grid, SignalSpec

PULSE_HEADER_KEYS = ("T_us", "dt_us", "N", "method", "seed", "config_sha256")


class GridError(ValueError):
    """Pulse times that cannot be placed on the grid."""


@dataclass(frozen=True)
class PulseSequence:
    pulse_times: tuple
    T: float
    dt: float
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = tuple(float(x) for x in self.pulse_times)
        tol = 1e-9 * self.T
        if any(t <= tol or t >= self.T - tol for t in p):
            raise ValueError("pulse times must lie strictly inside (0, T)")
        if any(b - a < self.dt - tol for a, b in zip(p, p[1:])):
            raise ValueError("pulses must be increasing and at least dt apart")
        object.__setattr__(self, "pulse_times", p)

    def __len__(self):
        return len(self.pulse_times)


def _spins_from_indices(grid: Grid, walls):
    """+1 on the first bin, sign flip after each 0-based wall index."""
    flips = np.zeros(grid.N, dtype=np.int64)
    flips[np.asarray(walls, dtype=np.int64) + 1] = 1
    return np.where(np.cumsum(flips) % 2 == 0, 1, -1).astype(np.int8)


def _snap(times, grid: Grid):
    j = np.rint(np.asarray(times, dtype=float) / grid.dt).astype(np.int64)
    return j


def cp_sequence(n: int, tau: float, grid: Grid) -> SpinSequence:
    """Carr-Purcell sequence with pulses at (k - 1/2) tau snapped to the grid."""
    if n < 1:
        raise ValueError("CP needs n >= 1 pulses")
    if abs(n * tau - grid.T) > grid.dt / 2:
        raise GridError(f"n*tau = {n * tau:g} us does not match T = {grid.T:g} us within dt/2")
    ideal = (np.arange(1, n + 1) - 0.5) * tau
    j = _snap(ideal, grid)
    if j[0] < 1 or j[-1] > grid.N - 1 or np.any(np.diff(j) < 1):
        raise GridError(
            f"tau = {tau:g} us is not representable with dt = {grid.dt:g} us; "
            f"use dt <= {tau / 2:g} us")
    return SpinSequence(_spins_from_indices(grid, j - 1), grid)


def gcp_sequence(spec: SignalSpec, grid: Grid, mode="midpoint") -> SpinSequence:
    """Sign-of-signal modulation: pulses at the zeros of h(t).

    ``mode="midpoint"`` samples sign(h) at bin centres (sign(0) = +1);
    ``mode="crossing"`` locates each zero by root finding and snaps it to
    the nearest grid time.
    """
    if mode == "midpoint":
        s = np.where(spec(grid.midpoints) >= 0, 1, -1).astype(np.int8)
        return SpinSequence(s, grid)
    if mode == "crossing":
        roots = signal_zeros(spec, grid.T, grid.dt / 8)
        j = _snap(roots, grid)
        j = j[(j >= 1) & (j <= grid.N - 1)]
        # two zeros in one bin cancel
        j, counts = np.unique(j, return_counts=True)
        j = j[counts % 2 == 1]
        s = _spins_from_indices(grid, j - 1)
        if spec(0.5 * grid.dt) < 0:
            s = -s
        return SpinSequence(s, grid)
    raise ValueError(f"unknown gCP mode {mode!r}")


def signal_zeros(spec: SignalSpec, T, step, xtol=1e-9):
    """Sign changes of h on (0, T), bracketed on a ``step`` mesh and refined."""
    t = np.linspace(0.0, T, int(math.ceil(T / step)) + 1)
    v = spec(t)
    out = []
    for a, b, va, vb in zip(t[:-1], t[1:], v[:-1], v[1:]):
        if va == 0.0 and a > 0:
            out.append(a)
        elif va * vb < 0:
            out.append(optimize.brentq(spec, a, b, xtol=xtol))
    return np.array(out)


def extract_pulses(seq: SpinSequence, metadata=None) -> PulseSequence:
    """Pulse at i*dt for each i with s_i != s_{i+1}."""
    return PulseSequence(tuple(seq.pulse_times), seq.grid.T, seq.grid.dt, dict(metadata or {}))


def embed_pulses(p: PulseSequence, grid: Grid, tol=1e-6) -> SpinSequence:
    """Inverse of :func:`extract_pulses`, with s_1 = +1. ``tol`` in units of dt."""
    if abs(p.T - grid.T) > 1e-9 * grid.T:
        raise GridError(f"pulse file T = {p.T} does not match grid T = {grid.T}")
    x = np.asarray(p.pulse_times, dtype=float) / grid.dt
    j = np.rint(x).astype(np.int64)
    off = np.abs(x - j) > tol
    if np.any(off):
        bad = np.asarray(p.pulse_times)[off][0]
        raise GridError(f"pulse at {bad!r} us is not on the dt = {grid.dt} us grid")
    if np.any(j < 1) or np.any(j > grid.N - 1):
        raise GridError("pulse outside the open interval (0, T)")
    return SpinSequence(_spins_from_indices(grid, j - 1), grid)


def format_pulse_file(p: PulseSequence) -> str:
    meta = {"T_us": f"{p.T:.9f}", "dt_us": f"{p.dt:.9f}", "N": str(int(round(p.T / p.dt)))}
    for key in ("method", "seed", "config_sha256"):
        meta[key] = str(p.metadata.get(key, ""))
    lines = [f"# {k}={meta[k]}" for k in PULSE_HEADER_KEYS]
    lines += [f"{t:.9f}" for t in p.pulse_times]
    return "\n".join(lines) + "\n"


def write_pulse_file(path, p: PulseSequence):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_pulse_file(p))


def parse_pulse_file(text: str) -> PulseSequence:
    meta, times = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        try:
            times.append(float(line))
        except ValueError:
            raise ValueError(f"line {lineno}: not a pulse time: {raw!r}") from None
    if "T_us" not in meta or "dt_us" not in meta:
        raise ValueError("pulse file header must define T_us and dt_us")
    T, dt = float(meta.pop("T_us")), float(meta.pop("dt_us"))
    meta.pop("N", None)
    return PulseSequence(tuple(times), T, dt, meta)


def read_pulse_file(path) -> PulseSequence:
    with open(path, encoding="utf-8") as fh:
        return parse_pulse_file(fh.read())
