"""Command-line interface: ``ddopt {bound,optimize,evaluate,ensemble,fit,sweep-k}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 degenerate input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from .anneal import anneal_unbiased
from .ensemble import EnsembleSpec, ENSEMBLE_NOISE, run_ensemble
from .metrics import FitError, Metrics, PopulationSample, evaluate, fit_population_curve, SpinSequence
from .model import GaussianNoise, QuadratureError
from .pipeline import problem_from_config, run_config
from .sequences import GridError, embed_pulses, extract_pulses, read_pulse_file, write_pulse_file
from .spherical import DegenerateSignalError

log = logging.getLogger("ddopt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DEGENERATE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _default_threads():
    try:
        return int(os.environ.get("DDOPT_THREADS", "1"))
    except ValueError:
        return 1


def _load_config(args):
    if not args.config:
        raise cfgmod.ConfigError("--config is required")
    cfg = cfgmod.load(args.config)
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "method", None):
        kw["method"] = args.method
    if getattr(args, "out", None):
        kw["output_dir"] = args.out
    return cfg.with_(**kw) if kw else cfg


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _metrics_text(m: Metrics, fmt, cfg):
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# config_sha256={cfg.sha256()} seed={cfg.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(Metrics.CSV_COLUMNS)
        w.writerow(m.csv_row())
        return buf.getvalue()
    d = m.to_dict()
    d.update(config_sha256=cfg.sha256(), seed=cfg.seed, method=cfg.method)
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def cmd_bound(args):
    cfg = _load_config(args)
    problem = problem_from_config(cfg)
    sol = problem.sm
    out = _outdir(cfg.output_dir)
    d = sol.to_dict()
    d.update(config_sha256=cfg.sha256(), seed=cfg.seed, T_us=cfg.grid.T, dt_us=cfg.grid.dt, N=cfg.grid.N)
    _write(os.path.join(out, "sm_solution.json"), json.dumps(d, sort_keys=True) + "\n")
    report = {k: d[k] for k in ("epsilon_sm", "eta_sm", "lambda", "D", "constraint_residual",
                                "config_sha256", "seed")}
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _write_trace(path, run, cfg):
    buf = io.StringIO()
    buf.write(f"# config_sha256={cfg.sha256()} seed={cfg.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "temperature", "current", "best"])
    for step, temp, cur, best in run.trace_rows():
        w.writerow([int(step), repr(float(temp)), repr(float(cur)), repr(float(best))])
    _write(path, buf.getvalue())


def cmd_optimize(args):
    cfg = _load_config(args)
    res = run_config(cfg)
    out = _outdir(cfg.output_dir)
    if res.sequence is None:
        d = res.solution.to_dict()
        d.update(config_sha256=cfg.sha256(), seed=cfg.seed)
        _write(os.path.join(out, "sm_solution.json"), json.dumps(d, sort_keys=True) + "\n")
        print(json.dumps({"method": "sm", "epsilon_sm": res.solution.epsilon_sm,
                          "eta_sm": res.solution.eta_sm}, indent=2))
        return EXIT_OK
    meta = {"method": cfg.method, "seed": cfg.seed, "config_sha256": cfg.sha256()}
    write_pulse_file(os.path.join(out, "pulses.txt"), extract_pulses(res.sequence, meta))
    ext = "csv" if args.format == "csv" else "json"
    text = _metrics_text(res.metrics, args.format, cfg)
    _write(os.path.join(out, f"metrics.{ext}"), text)
    if res.anneal is not None:
        _write_trace(os.path.join(out, "trace.csv"), res.anneal, cfg)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _load_config(args)
    pulses = read_pulse_file(args.pulses)
    seq = embed_pulses(pulses, cfg.grid)
    problem = problem_from_config(cfg)
    m = evaluate(seq, problem.h, problem.J, cfg.gamma, epsilon_sm=problem.sm.epsilon_sm)
    text = _metrics_text(m, args.format, cfg)
    if args.out:
        ext = "csv" if args.format == "csv" else "json"
        _write(os.path.join(_outdir(args.out), f"metrics.{ext}"), text)
    sys.stdout.write(text)
    return EXIT_OK


def read_population_csv(path):
    samples = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = {"b", "P", "sigma_P"} - set(rows.fieldnames or ())
        if missing:
            raise cfgmod.ConfigError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(rows, 2):
            try:
                samples.append(PopulationSample(float(row["b"]), float(row["P"]), float(row["sigma_P"])))
            except (TypeError, ValueError) as exc:
                raise cfgmod.ConfigError(f"{path}: row {lineno}: {exc}") from None
    return samples


def cmd_fit(args):
    samples = read_population_csv(args.data)
    fit = fit_population_curve(samples, args.T)
    d = {"chi": fit.chi, "chi_err": fit.chi_err, "phase_per_field": fit.phase_per_field,
         "phase_per_field_err": fit.phase_per_field_err, "eta": fit.eta, "eta_err": fit.eta_err,
         "chi2": fit.chi2, "T_us": args.T}
    text = json.dumps(d, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write(os.path.join(_outdir(args.out), "fit.json"), text)
    sys.stdout.write(text)
    return EXIT_OK


def _ensemble_spec(args):
    d = {}
    if args.config:
        import toml
        try:
            d = toml.load(args.config).get("ensemble", {})
        except toml.TomlDecodeError as exc:
            raise cfgmod.ConfigError(f"line {exc.lineno}: {exc.msg}") from None
    kw = {}
    for key in ("n_instances", "n_freq", "dt", "master_seed"):
        if key in d:
            kw[key] = d[key]
    if "T_list" in d:
        kw["T_list"] = tuple(d["T_list"])
    if "methods" in d:
        kw["methods"] = tuple(d["methods"])
    if "freq_range" in d:
        kw["freq_range"] = tuple(d["freq_range"])
    if "noise" in d:
        nd = d["noise"]
        kw["noise"] = GaussianNoise(
            s0=nd.get("s0_mhz", ENSEMBLE_NOISE.s0), amplitude=nd.get("amplitude_mhz", ENSEMBLE_NOISE.amplitude),
            nu_l=nd.get("nu_l_mhz", ENSEMBLE_NOISE.nu_l), sigma_nu=nd.get("sigma_nu_mhz", ENSEMBLE_NOISE.sigma_nu))
    if "K" in d:
        kw["unbiased"] = cfgmod.UNBIASED_CONFIG_DEFAULT.with_(K=float(d["K"]))
    if args.n_instances is not None:
        kw["n_instances"] = args.n_instances
    if args.T_list:
        kw["T_list"] = tuple(float(x) for x in args.T_list.split(","))
    if args.methods:
        kw["methods"] = tuple(args.methods.split(","))
    if args.seed is not None:
        kw["master_seed"] = args.seed
    try:
        return EnsembleSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise cfgmod.ConfigError(str(exc)) from None


def cmd_ensemble(args):
    spec = _ensemble_spec(args)
    bad = set(spec.methods) - set(cfgmod.METHODS) - {"sm"}
    if bad or "cp" in spec.methods:
        raise cfgmod.ConfigError(f"methods: not usable in an ensemble: {sorted(bad | ({'cp'} & set(spec.methods)))}")
    res = run_ensemble(spec, threads=args.threads)
    out = _outdir(args.out or "out")
    _write(os.path.join(out, "ensemble.csv"), res.rows_csv())
    _write(os.path.join(out, "ensemble_summary.csv"), res.summary_csv())
    if args.format == "json":
        print(json.dumps(res.summary(), indent=2))
    else:
        sys.stdout.write(res.summary_csv())
    return EXIT_OK


def cmd_sweep_k(args):
    cfg = _load_config(args)
    problem = problem_from_config(cfg)
    eps_sm = problem.sm.epsilon_sm
    ks = [float(x) for x in args.K.split(",")]
    buf = io.StringIO()
    buf.write(f"# config_sha256={cfg.sha256()} seed={cfg.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "repeat", "seed"] + list(Metrics.CSV_COLUMNS))
    for K in ks:
        for r in range(args.repeats):
            seed = (int(cfg.seed) + r) % 2 ** 64
            run = anneal_unbiased(problem.h, problem.J, cfg.anneal.with_(K=K, seed=seed))
            seq = SpinSequence(run.spins, cfg.grid)
            m = evaluate(seq, problem.h, problem.J, cfg.gamma, epsilon_sm=eps_sm)
            w.writerow([repr(K), r, seed] + m.csv_row())
    out = _outdir(cfg.output_dir)
    _write(os.path.join(out, "sweep_k.csv"), buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ddopt", description="Optimal dynamical-decoupling sequences for AC sensing.")
    p.add_argument("--error-json", action="store_true", help="print errors as JSON on stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--out", help="output directory (overrides [output].dir)")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        if seed:
            sp.add_argument("--seed", type=int, help="64-bit seed")
        sp.add_argument("--threads", type=int, default=_default_threads())

    sp = sub.add_parser("bound", help="spherical-model bound eta_SM")
    common(sp)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("optimize", help="produce a pulse file with the chosen method")
    common(sp)
    sp.add_argument("--method", choices=cfgmod.METHODS)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("evaluate", help="metrics of an existing pulse file")
    common(sp)
    sp.add_argument("--pulses", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ensemble", help="random-signal benchmark of eta_SM / eta")
    common(sp)
    sp.add_argument("--n-instances", type=int)
    sp.add_argument("--T-list", help="comma-separated sensing times in us")
    sp.add_argument("--methods", help="comma-separated method names")
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("fit", help="cosine fit of measured P(b)")
    sp.add_argument("--data", required=True, help="CSV with columns b,P,sigma_P")
    sp.add_argument("--T", type=float, required=True, help="sensing time in us")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("sweep-k", help="unbiased SA over ferromagnetic couplings K")
    common(sp)
    sp.add_argument("--K", default="0,0.0003,0.001,0.003,0.01", help="comma-separated K values")
    sp.add_argument("--repeats", type=int, default=3)
    sp.set_defaults(func=cmd_sweep_k)
    return p


def _classify(exc):
    if isinstance(exc, DegenerateSignalError):
        return EXIT_DEGENERATE
    if isinstance(exc, (cfgmod.ConfigError, GridError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, (QuadratureError, FitError, ArithmeticError, np.linalg.LinAlgError, RuntimeError)):
        return EXIT_NUMERIC
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = _classify(exc)
        if code is None:
            raise
        if args.error_json:
            print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}))
        else:
            print(f"ddopt: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
