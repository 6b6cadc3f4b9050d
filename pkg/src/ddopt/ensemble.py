"""Random-signal ensemble benchmark (eta_SM / eta per instance, T and method)."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .anneal import DOMAIN_WALL_DEFAULT, AnnealSchedule
from .config import UNBIASED_CONFIG_DEFAULT
from .model import GaussianNoise, Grid, SignalSpec, build_coupling_matrix
from .pipeline import Problem, run_method
from .spherical import DEFAULT_GAMMA, DegenerateSignalError, diagonalize

# Gaussian peak at 0.4316 MHz with 0.016 MHz width; strength and floor as in
# the experimental NSD.
ENSEMBLE_NOISE = GaussianNoise(s0=0.00119, amplitude=0.52, nu_l=0.4316, sigma_nu=0.016)
ENSEMBLE_METHODS = ("gcp", "sign_sm", "sa", "gcp_sa", "sign_sm_sa")

ROW_COLUMNS = ("instance", "T", "method", "seed", "n_pulses", "chi", "epsilon", "epsilon_sm",
               "eta_sm_ratio", "status")
SUMMARY_COLUMNS = ("T", "method", "count", "failures", "mean", "median", "p20", "p80")


@dataclass(frozen=True)
class EnsembleSpec:
    n_instances: int = 100
    n_freq: int = 7
    freq_range: tuple = (0.0, 1.0)
    noise: GaussianNoise = ENSEMBLE_NOISE
    dt: float = 0.1
    T_list: tuple = (20.0, 40.0, 60.0, 80.0, 100.0)
    methods: tuple = ENSEMBLE_METHODS
    master_seed: int = 0
    unbiased: AnnealSchedule = UNBIASED_CONFIG_DEFAULT
    domain_wall: AnnealSchedule = DOMAIN_WALL_DEFAULT
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.n_instances < 1 or self.n_freq < 1:
            raise ValueError("n_instances and n_freq must be >= 1")
        object.__setattr__(self, "T_list", tuple(float(t) for t in self.T_list))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "freq_range", tuple(float(f) for f in self.freq_range))

    def to_dict(self):
        d = asdict(self)
        d["noise"] = asdict(self.noise)
        return d

    def sha256(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def instance_signal(spec: EnsembleSpec, i: int) -> SignalSpec:
    """Signal of instance ``i``: uniform frequencies and phases, amplitudes
    uniform then normalized to sum 1."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.master_seed, i, 0]))
    lo, hi = spec.freq_range
    nu = rng.uniform(lo, hi, spec.n_freq)
    phi = rng.uniform(0.0, 2 * math.pi, spec.n_freq)
    amp = rng.uniform(0.0, 1.0, spec.n_freq)
    amp = amp / amp.sum()
    return SignalSpec(tuple(amp), tuple(nu), tuple(phi))


def method_seed(spec: EnsembleSpec, i, t_idx, m_idx) -> int:
    ss = np.random.SeedSequence([spec.master_seed, i, 1, t_idx, m_idx])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


_CACHE = {}


def _coupling(noise, T, dt):
    key = (noise, T, dt)
    if key not in _CACHE:
        grid = Grid(T, dt)
        J = build_coupling_matrix(noise, grid)
        _CACHE.clear()
        _CACHE[key] = (J, diagonalize(J))
    return _CACHE[key]


def run_task(spec: EnsembleSpec, i: int, t_idx: int):
    """All methods for instance ``i`` at T = T_list[t_idx]; failures become rows."""
    T = spec.T_list[t_idx]
    rows = []
    try:
        J, basis = _coupling(spec.noise, T, spec.dt)
        problem = Problem(instance_signal(spec, i), spec.noise, Grid(T, spec.dt), spec.gamma, J=J, basis=basis)
        eps_sm = problem.sm.epsilon_sm
    except (DegenerateSignalError, RuntimeError, ValueError) as exc:
        return [_failed(i, T, m, 0, exc) for m in spec.methods]
    for m_idx, method in enumerate(spec.methods):
        seed = method_seed(spec, i, t_idx, m_idx)
        try:
            res = run_method(problem, method, seed=seed, unbiased=spec.unbiased, domain_wall=spec.domain_wall)
        except (DegenerateSignalError, RuntimeError, ValueError) as exc:
            rows.append(_failed(i, T, method, seed, exc))
            continue
        if res.metrics is None:
            rows.append(dict(instance=i, T=T, method=method, seed=seed, n_pulses=None, chi=None,
                             epsilon=eps_sm, epsilon_sm=eps_sm, eta_sm_ratio=1.0, status="ok"))
            continue
        mt = res.metrics
        rows.append(dict(instance=i, T=T, method=method, seed=seed, n_pulses=mt.n_pulses, chi=mt.chi,
                         epsilon=mt.epsilon, epsilon_sm=eps_sm, eta_sm_ratio=mt.eta_sm_ratio, status="ok"))
    return rows


def _failed(i, T, method, seed, exc):
    return dict(instance=i, T=T, method=method, seed=seed, n_pulses=None, chi=None, epsilon=None,
                epsilon_sm=None, eta_sm_ratio=None, status=f"error: {type(exc).__name__}: {exc}")


def _task_star(args):
    return args[1], args[2], run_task(*args)


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    rows: list = field(repr=False)

    def ratios(self, T, method):
        return np.array([r["eta_sm_ratio"] for r in self.rows
                         if r["T"] == float(T) and r["method"] == method and r["status"] == "ok"])

    def summary(self):
        out = []
        for T in self.spec.T_list:
            for method in self.spec.methods:
                sel = [r for r in self.rows if r["T"] == T and r["method"] == method]
                v = np.array([r["eta_sm_ratio"] for r in sel if r["status"] == "ok"], dtype=float)
                fails = len(sel) - len(v)
                if len(v):
                    p20, med, p80 = np.percentile(v, [20, 50, 80])
                    out.append(dict(T=T, method=method, count=len(v), failures=fails, mean=float(v.mean()),
                                    median=float(med), p20=float(p20), p80=float(p80)))
                else:
                    out.append(dict(T=T, method=method, count=0, failures=fails, mean=None, median=None,
                                    p20=None, p80=None))
        return out

    def _csv(self, columns, rows):
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.spec.sha256()} seed={self.spec.master_seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in columns])
        return buf.getvalue()

    def rows_csv(self):
        return self._csv(ROW_COLUMNS, self.rows)

    def summary_csv(self):
        return self._csv(SUMMARY_COLUMNS, self.summary())


def run_ensemble(spec: EnsembleSpec, threads=1) -> EnsembleResult:
    """Deterministic under ``master_seed``; rows are merged in (instance, T) order."""
    # T-major order keeps one coupling matrix warm per worker
    tasks = [(spec, i, t) for t in range(len(spec.T_list)) for i in range(spec.n_instances)]
    if threads <= 1:
        results = [_task_star(a) for a in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task_star, tasks, chunksize=chunk))
    by_key = {}
    for i, t_idx, rows in results:
        by_key[(i, t_idx)] = rows
    ordered = []
    for i in range(spec.n_instances):
        for t in range(len(spec.T_list)):
            ordered.extend(by_key[(i, t)])
    return EnsembleResult(spec, ordered)
