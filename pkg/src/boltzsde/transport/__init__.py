"""Forward and adjoint particle transport sharing one stepper."""

from .adjoint import seed_detector_ensemble, simulate_adjoint_trajectory, step_adjoint
from .common import (
    ADJOINT,
    FORWARD,
    EnsembleRun,
    PreconditionError,
    SimulationParams,
    StartBank,
    Trajectory,
    TrajectoryEnsemble,
    TransportProblem,
    adjoint_problem,
    forward_problem,
    run_ensemble,
    seed_on_mesh,
    seed_region,
    simulate_trajectory,
)
from .forward import sample_scatter_steps, seed_source_ensemble, simulate_forward_trajectory, step_forward
