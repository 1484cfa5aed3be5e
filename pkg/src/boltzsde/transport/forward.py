"""Forward process: streams along +omega, scatters at Sigma_s with kernel p."""

from __future__ import annotations

import math

from ..phase_domain import CrossSectionField, Domain, PhaseState, ScatterKernel
from ..rng import ParticleStream
from . import _kernels as K
from .common import (
    PreconditionError,
    SimulationParams,
    StartBank,
    Trajectory,
    forward_problem,
    seed_region,
    simulate_trajectory,
)


def sample_scatter_steps(rate: float, rng: ParticleStream, params: SimulationParams = SimulationParams()):
    """Steps until the next scatter: smallest k with k*dt >= T, T ~ Exp(rate*v).

    Consumes one uniform even when ``rate`` is 0, in which case ``math.inf``
    is returned.
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    k = K.countdown_from_uniform(rng.uniform(), float(rate), params.v, params.dt)
    return math.inf if k == K.NO_SCATTER else int(k)


def _step(s: PhaseState, params, scatter_pending, kernel, rng, sense):
    x = s.x + params.v * sense * s.omega * params.dt
    if not scatter_pending:
        return PhaseState(x, s.omega, s.energy)
    out = kernel.sample(s, rng)
    return PhaseState(x, out.omega, out.energy)


def step_forward(s: PhaseState, params: SimulationParams, scatter_pending: bool,
                 kernel: ScatterKernel, rng: ParticleStream) -> PhaseState:
    """Advance one step; a pending scatter redraws (omega, energy) after the move."""
    return _step(s, params, scatter_pending, kernel, rng, 1)


def simulate_forward_trajectory(start: PhaseState, domain: Domain, xs: CrossSectionField,
                                kernel: ScatterKernel, params: SimulationParams,
                                rng: ParticleStream) -> Trajectory:
    return simulate_trajectory(forward_problem(domain, xs, kernel), start, params, rng)


def seed_source_ensemble(f, domain, mesh, particles_per_cell, convention="centers") -> StartBank:
    return seed_region(f, domain, mesh, particles_per_cell, convention)


__all__ = [
    "PreconditionError",
    "sample_scatter_steps",
    "seed_source_ensemble",
    "simulate_forward_trajectory",
    "step_forward",
]
