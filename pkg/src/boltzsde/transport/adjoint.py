"""Adjoint process: streams along -omega, scatters at S with kernel q."""

from __future__ import annotations

from ..phase_domain import AdjointKernel, CrossSectionField, Domain, PhaseState
from ..rng import ParticleStream
from .common import SimulationParams, StartBank, Trajectory, adjoint_problem, seed_region, simulate_trajectory
from .forward import _step


def step_adjoint(s: PhaseState, params: SimulationParams, scatter_pending: bool,
                 adjoint_kernel: AdjointKernel, rng: ParticleStream) -> PhaseState:
    return _step(s, params, scatter_pending, adjoint_kernel, rng, -1)


def simulate_adjoint_trajectory(start: PhaseState, domain: Domain, adjoint_kernel: AdjointKernel,
                                xs: CrossSectionField, params: SimulationParams,
                                rng: ParticleStream) -> Trajectory:
    problem = adjoint_problem(domain, xs, adjoint_kernel.p, adjoint_kernel)
    return simulate_trajectory(problem, start, params, rng)


def seed_detector_ensemble(g, domain, mesh, particles_per_cell, convention="centers") -> StartBank:
    return seed_region(g, domain, mesh, particles_per_cell, convention)
