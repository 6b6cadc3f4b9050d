"""End-to-end acceptance checks, one test per criterion.

Each test appends a PASS/FAIL line to ``RESULTS``; conftest prints them in the
terminal summary. Run directly with ``python tests/test_acceptance.py``.
The default ensemble (100 instances x 5 sensing times x 5 methods) is computed
once per session and shared by criteria 1, 3 and 4.
"""
import json
import math
import os
import time

import numpy as np
import pytest

from ddopt import cli
from ddopt.anneal import DOMAIN_WALL_DEFAULT, IsingState, anneal_domain_wall, anneal_unbiased, energy
from ddopt.config import UNBIASED_CONFIG_DEFAULT
from ddopt.ensemble import ENSEMBLE_NOISE, EnsembleSpec, instance_signal, run_ensemble
from ddopt.metrics import SpinSequence, chi_continuous, decoherence, parseval_integral, phase, population
from ddopt.model import NV_BATH_NOISE, TRICHROMATIC_SIGNAL, Grid, build_coupling_matrix, build_field_vector
from ddopt.oracle import brute_force_min
from ddopt.sequences import cp_sequence
from ddopt.spherical import project_to_hypercube, solve

RESULTS = []


def report(number, title, ok, detail):
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}")
    print(RESULTS[-1])
    assert ok, detail


def _threads():
    try:
        return max(1, int(os.environ.get("DDOPT_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


@pytest.fixture(scope="module")
def default_ensemble():
    spec = EnsembleSpec()
    t0 = time.perf_counter()
    res = run_ensemble(spec, threads=_threads())
    return res, time.perf_counter() - t0


def _mean(res, T, method):
    return float(np.mean(res.ratios(T, method)))


def test_01_bound_dominance(default_ensemble):
    res, elapsed = default_ensemble
    ok_rows = [r for r in res.rows if r["status"] == "ok"]
    failed = len(res.rows) - len(ok_rows)
    worst = min(r["epsilon"] - r["epsilon_sm"] for r in ok_rows)
    ok = failed == 0 and worst >= -1e-9 and elapsed <= 300
    report(1, "spherical bound dominance", ok,
           f"{len(ok_rows)} sequences, min(eps - eps_SM) = {worst:.3e}, failures = {failed}, "
           f"ensemble time {elapsed:.0f} s (limit 300 s)")


def test_02_brute_force_optimality():
    spec = EnsembleSpec(master_seed=2024)
    grid = Grid(1.4, 0.1)
    J = build_coupling_matrix(ENSEMBLE_NOISE, grid)
    k_values = (0.0, 1e-3, 1e-2)
    t0 = time.perf_counter()
    dw_hits, ub_hits = 0, {K: 0 for K in k_values}
    for i in range(50):
        h = build_field_vector(instance_signal(spec, i), grid)
        best = brute_force_min(h, J).best_epsilon
        start = project_to_hypercube(solve(h, J))
        run = anneal_domain_wall(start, h, J, DOMAIN_WALL_DEFAULT.with_(seed=i))
        dw_hits += energy(run.spins, h, J) <= best + 1e-9
        for K in k_values:
            run = anneal_unbiased(h, J, UNBIASED_CONFIG_DEFAULT.with_(K=K, seed=i))
            ub_hits[K] += energy(run.spins, h, J) <= best + 1e-9
    elapsed = time.perf_counter() - t0
    best_K = max(k_values, key=lambda K: ub_hits[K])
    ok = dw_hits >= 45 and ub_hits[best_K] >= 40 and elapsed <= 600
    sweep = ", ".join(f"K={K:g}: {ub_hits[K]}" for K in k_values)
    report(2, "brute-force optimality (N = 14)", ok,
           f"sign(SM)+SA {dw_hits}/50 (need 45); unbiased SA best K={best_K:g} {ub_hits[best_K]}/50 "
           f"(need 40) [{sweep}]; {elapsed:.0f} s (limit 600 s)")


def test_03_method_ordering(default_ensemble):
    res, _ = default_ensemble
    gcp, sgn, best = (_mean(res, 100.0, m) for m in ("gcp", "sign_sm", "sign_sm_sa"))
    trend = [_mean(res, T, "gcp") for T in res.spec.T_list]
    monotone = all(a > b for a, b in zip(trend, trend[1:]))
    ok = gcp < sgn < best and best >= 0.70 and monotone
    report(3, "method ordering at T = 100 us", ok,
           f"mean eta_SM/eta gCP {gcp:.3f} < sign(SM) {sgn:.3f} < sign(SM)+SA {best:.3f} (>= 0.70); "
           f"gCP over T: {', '.join(f'{v:.3f}' for v in trend)}")


def test_04_empirical_bound(default_ensemble):
    res, _ = default_ensemble
    ratios = res.ratios(100.0, "sign_sm_sa")
    med = float(np.median(1.0 / ratios))
    report(4, "empirical bound", med <= 1.35, f"median eta/eta_SM for sign(SM)+SA at T = 100 us = {med:.4f} (<= 1.35)")


def test_05_chi_cross_validation():
    grid = Grid(32.0, 0.16)
    J = build_coupling_matrix(NV_BATH_NOISE, grid)
    rng = np.random.default_rng(5)
    worst_chi = worst_parseval = 0.0
    for _ in range(100):
        flips = rng.random(grid.N) < rng.uniform(0.005, 0.5)
        seq = SpinSequence(np.where(np.cumsum(flips) % 2 == 0, 1, -1), grid)
        chi = decoherence(seq, J)
        worst_chi = max(worst_chi, abs(chi_continuous(seq, NV_BATH_NOISE) - chi) / chi)
        worst_parseval = max(worst_parseval, abs(parseval_integral(seq) - grid.T) / grid.T)
    ok = worst_chi < 1e-3 and worst_parseval < 1e-3
    report(5, "chi cross-validation", ok,
           f"max |chi_cont - chi|/chi = {worst_chi:.2e}, max Parseval error = {worst_parseval:.2e} (limit 1e-3)")


def test_06_cp_collapses():
    taus = np.round(np.arange(1.5, 6.0, 0.01), 10)
    b = 1.0
    phi = np.empty(len(taus))
    chi = np.empty(len(taus))
    for j, tau in enumerate(taus):
        grid = Grid(16 * tau, tau / 10)
        seq = cp_sequence(16, tau, grid)
        phi[j] = phase(seq, build_field_vector(TRICHROMATIC_SIGNAL, grid), b=b)
        chi[j] = decoherence(seq, build_coupling_matrix(NV_BATH_NOISE, grid))
    amp = np.abs(phi)
    peaks = [j for j in range(1, len(taus) - 1) if amp[j] >= amp[j - 1] and amp[j] >= amp[j + 1]]
    details, ok = [], True
    for nu in (0.1150, 0.2125):
        target = 1 / (2 * nu)
        j = min(peaks, key=lambda p: abs(taus[p] - target))
        near = abs(taus[j] - target) <= target / 10
        ok &= near
        details.append(f"|phi| max at tau={taus[j]:.2f} vs 1/(2nu)={target:.3f} (dt={target / 10:.3f})")
    masked = 1 / (2 * 0.1450)
    chis = {t: chi[np.argmin(np.abs(taus - t))] for t in (masked, 1 / (2 * 0.1150), 1 / (2 * 0.2125))}
    chi_masked = chis.pop(masked)
    ok &= all(chi_masked > c for c in chis.values())
    # fringe contrast P(b: phi = 0) - P(b: phi = pi) = e^-chi; the masked resonance keeps little of it
    contrast = [float(population(c, 0.0) - population(c, math.pi)) for c in chis.values()]
    details.append(f"chi(3.448) = {chi_masked:.3f} > " + ", ".join(f"chi({t:.3f}) = {c:.3f}" for t, c in chis.items()))
    details.append(f"contrast {float(population(chi_masked, 0.0) - population(chi_masked, math.pi)):.3f} vs "
                   + ", ".join(f"{v:.3f}" for v in contrast))
    report(6, "CP coherence collapses", ok, "; ".join(details))


def test_07_performance():
    spec = EnsembleSpec()
    grid = Grid(50.0, 0.1)
    h = build_field_vector(instance_signal(spec, 0), grid)
    J = build_coupling_matrix(ENSEMBLE_NOISE, grid)
    t0 = time.perf_counter()
    sol = solve(h, J)
    anneal_domain_wall(project_to_hypercube(sol), h, J, DOMAIN_WALL_DEFAULT.with_(seed=1))
    t_sm = time.perf_counter() - t0
    t0 = time.perf_counter()
    anneal_unbiased(h, J, UNBIASED_CONFIG_DEFAULT.with_(seed=1))
    t_sa = time.perf_counter() - t0
    report(7, "performance at N = 500", t_sm <= 1.0 and t_sa <= 5.0,
           f"SM + 1e3-step wall SA {t_sm:.3f} s (<= 1 s); 1e5-step unbiased SA {t_sa:.2f} s (<= 5 s)")


def test_08_incremental_updates():
    grid = Grid(20.0, 0.1)
    h = build_field_vector(instance_signal(EnsembleSpec(), 3), grid)
    J = build_coupling_matrix(ENSEMBLE_NOISE, grid)
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        s = rng.choice([-1.0, 1.0], grid.N)
        K = float(rng.choice([0.0, 1e-3, 0.1]))
        i = int(rng.integers(grid.N))
        state = IsingState(s, h, J, K)
        flipped = s.copy()
        flipped[i] *= -1
        worst = max(worst, abs(state.delta_energy(i) - (energy(flipped, h, J, K) - energy(s, h, J, K))))
    state = IsingState(rng.choice([-1.0, 1.0], grid.N), h, J, 1e-3)
    for i in rng.integers(0, grid.N, 10_000):
        state.flip(int(i))
    drift = abs(state.energy - energy(state.s, h, J, 1e-3))
    report(8, "incremental-update correctness", worst < 1e-10 and drift < 1e-8,
           f"max delta error {worst:.2e} (< 1e-10) over 1000 pairs; drift after 1e4 moves {drift:.2e} (< 1e-8)")


CONFIG = """
method = "sign_sm_sa"
seed = 12345

[grid]
T_us = 32.0
dt_us = 0.16

[signal]
normalized = true
components = [[0.288, 0.1150, 0.0], [0.335, 0.2125, 0.0], [0.377, 0.1450, 0.0]]

[noise]
kind = "gaussian"
s0_mhz = 0.00119
amplitude_mhz = 0.52
nu_l_mhz = 0.4316
sigma_nu_mhz = 0.0042
"""


def test_09_determinism(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(CONFIG)
    same = True
    for method in ("sign_sm_sa", "sa", "gcp"):
        outs = []
        for d in ("a", "b"):
            out = tmp_path / f"{method}_{d}"
            assert cli.main(["optimize", "--config", str(cfg), "--method", method, "--format", "csv",
                             "--out", str(out)]) == 0
            outs.append(tuple((out / n).read_bytes() for n in ("pulses.txt", "metrics.csv")))
        same &= outs[0] == outs[1]
    capsys.readouterr()
    spec = EnsembleSpec(n_instances=4, T_list=(20.0, 40.0))
    serial, parallel = run_ensemble(spec, threads=1), run_ensemble(spec, threads=2)
    par_same = serial.rows_csv() == parallel.rows_csv() and serial.summary_csv() == parallel.summary_csv()
    report(9, "determinism", same and par_same,
           f"repeat runs byte-identical: {same}; serial vs 2-worker ensemble CSVs identical: {par_same}")


def _fit_cli(tmp_path, capsys, b, P, name):
    path = tmp_path / f"{name}.csv"
    path.write_text("b,P,sigma_P\n" + "".join(f"{float(x)!r},{float(p)!r},0.01\n" for x, p in zip(b, P)))
    assert cli.main(["fit", "--data", str(path), "--T", "32"]) == 0
    return json.loads(capsys.readouterr().out)


def test_10_fit_round_trip(tmp_path, capsys):
    b = np.linspace(-0.5, 0.5, 41)
    chi0, k0 = 0.3, 20.0
    clean = _fit_cli(tmp_path, capsys, b, population(chi0, k0 * b), "clean")
    err = max(abs(clean["chi"] - chi0), abs(clean["phase_per_field"] - k0) / k0)
    rng = np.random.default_rng(10)
    covered = 0
    for trial in range(100):
        P = np.clip(population(chi0, k0 * b) + rng.normal(scale=0.01, size=len(b)), 0, 1)
        fit = _fit_cli(tmp_path, capsys, b, P, f"noisy{trial}")
        covered += (abs(fit["chi"] - chi0) <= 3 * fit["chi_err"]
                    and abs(fit["phase_per_field"] - k0) <= 3 * fit["phase_per_field_err"])
    report(10, "fit round trip", err < 1e-6 and covered >= 99,
           f"noiseless recovery error {err:.1e} (< 1e-6); 3-sigma coverage {covered}/100 (>= 99)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
