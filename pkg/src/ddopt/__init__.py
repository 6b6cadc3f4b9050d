"""Optimal dynamical-decoupling sequences for AC spin-qubit magnetometry.

The sensitivity of a pulsed sensor maps onto the energy of an Ising chain
(spins = sign of the modulation function, domain walls = pi pulses). The
spherical relaxation of that chain is solved exactly and gives both a lower
bound on the sensitivity and a seed for a short domain-wall annealing run.
"""
from .anneal import AnnealSchedule, IsingState, anneal_domain_wall, anneal_unbiased, energy
from .metrics import SpinSequence, evaluate, log_sensitivity
from .model import (NV_BATH_NOISE, TRICHROMATIC_SIGNAL, GaussianNoise, Grid, SignalSpec, TabulatedNoise,
                    build_coupling_matrix, build_field_vector)
from .sequences import PulseSequence, cp_sequence, extract_pulses, gcp_sequence
from .spherical import DEFAULT_GAMMA, SphericalSolution, project_to_hypercube, solve

__version__ = "0.1.0"
