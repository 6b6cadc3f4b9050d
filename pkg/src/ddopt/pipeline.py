"""Run one optimization method on one (signal, noise, grid) problem."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from . import anneal, metrics, sequences, spherical
from .model import Grid, build_coupling_matrix, build_field_vector

SEQUENCE_METHODS = ("gcp", "cp", "sign_sm", "sign_sm_sa", "gcp_sa", "sa")


class Problem:
    """Field vector, couplings and (lazily) the spherical solution."""

    def __init__(self, signal, noise, grid: Grid, gamma=spherical.DEFAULT_GAMMA, mode="exact",
                 J=None, basis=None):
        self.signal = signal
        self.noise = noise
        self.grid = grid
        self.gamma = gamma
        self.mode = mode
        self.h = build_field_vector(signal, grid)
        self.J = J if J is not None else build_coupling_matrix(noise, grid)
        self._basis = basis

    @property
    def basis(self):
        if self._basis is None:
            self._basis = spherical.diagonalize(self.J, self.mode)
        return self._basis

    @cached_property
    def sm(self) -> spherical.SphericalSolution:
        return spherical.solve(self.h, self.J, T=self.grid.T, gamma=self.gamma, basis=self.basis)


@dataclass(eq=False)
class MethodResult:
    method: str
    sequence: metrics.SpinSequence | None
    metrics: metrics.Metrics | None
    solution: spherical.SphericalSolution
    anneal: anneal.AnnealResult | None = field(default=None, repr=False)


def run_method(problem: Problem, method, *, seed=0, unbiased=None, domain_wall=None, cp=None,
               gcp_mode="midpoint") -> MethodResult:
    unbiased = (unbiased or anneal.UNBIASED_DEFAULT).with_(seed=seed, move_kind="unbiased")
    domain_wall = (domain_wall or anneal.DOMAIN_WALL_DEFAULT).with_(seed=seed, move_kind="domain_wall", K=0.0)
    grid, h, J = problem.grid, problem.h, problem.J
    sol = problem.sm
    run = None
    if method == "sm":
        return MethodResult(method, None, None, sol)
    if method == "gcp":
        seq = sequences.gcp_sequence(problem.signal, grid, gcp_mode)
    elif method == "cp":
        if cp is None:
            raise ValueError("method 'cp' needs (n, tau)")
        seq = sequences.cp_sequence(int(cp[0]), float(cp[1]), grid)
    elif method == "sign_sm":
        seq = metrics.SpinSequence(spherical.project_to_hypercube(sol), grid)
    elif method in ("sign_sm_sa", "gcp_sa"):
        if method == "sign_sm_sa":
            start = spherical.project_to_hypercube(sol)
        else:
            start = sequences.gcp_sequence(problem.signal, grid, gcp_mode).spins
        run = anneal.anneal_domain_wall(start, h, J, domain_wall)
        seq = metrics.SpinSequence(run.spins, grid)
    elif method == "sa":
        run = anneal.anneal_unbiased(h, J, unbiased)
        seq = metrics.SpinSequence(run.spins, grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    m = metrics.evaluate(seq, h, J, problem.gamma, epsilon_sm=sol.epsilon_sm)
    return MethodResult(method, seq, m, sol, run)


def problem_from_config(cfg, J=None):
    return Problem(cfg.signal, cfg.noise, cfg.grid, cfg.gamma, cfg.diagonalization, J=J)


def run_config(cfg, method=None, problem=None):
    problem = problem or problem_from_config(cfg)
    return run_method(problem, method or cfg.method, seed=cfg.seed, unbiased=cfg.anneal,
                      domain_wall=cfg.domain_wall, cp=cfg.cp, gcp_mode=cfg.gcp_mode)

