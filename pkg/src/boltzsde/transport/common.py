"""Shared transport machinery for the forward and adjoint processes."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .. import _backend
from ..phase_domain import (
    AdjointKernel,
    ConfigurationError,
    CrossSectionField,
    Domain,
    Mesh,
    PhaseState,
    RegionDensity,
    ScatterKernel,
    build_adjoint_kernel,
    build_phase_grid,
    normalized_cdf,
    region_mesh,
)
from ..rng import ParticleStream, stream_keys
from . import _kernels as K
from . import _vectorized

logger = logging.getLogger(__name__)

FORWARD = 1
ADJOINT = -1
SENSE_NAMES = {FORWARD: "forward", ADJOINT: "adjoint"}
EXIT_NAMES = {K.EXIT_LEFT: "left-domain", K.EXIT_ABSORBED: "absorbed-analog", K.EXIT_CENSUS: "census-cap"}
DEFAULT_CHUNK = 4096
NUMPY_CHUNK = 65536


class PreconditionError(ValueError):
    """A start state lies outside the domain."""


@dataclass(frozen=True)
class SimulationParams:
    dt: float = 0.01
    v: float = 1.0
    max_steps: int = 10 ** 6
    absorption_mode: str = "weighted"
    exact_events: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if not self.v > 0:
            raise ConfigurationError(f"v must be > 0, got {self.v}")
        if int(self.max_steps) < 1:
            raise ConfigurationError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.absorption_mode not in ("weighted", "analog"):
            raise ConfigurationError(f"absorption_mode must be weighted or analog")

    @property
    def analog(self):
        return self.absorption_mode == "analog"


class TransportTables(NamedTuple):
    dom: np.ndarray
    x_breaks: np.ndarray
    om_b: np.ndarray
    en_b: np.ndarray
    has_e: bool
    rate: np.ndarray
    att: np.ndarray
    cdf: np.ndarray
    out_b: np.ndarray


@dataclass(frozen=True, eq=False)
class TransportProblem:
    """Everything a stepper needs: geometry, physics and the compiled tables.

    ``sense`` is +1 for the forward process (rate Sigma_s, kernel p,
    attenuation Sigma_a) and -1 for the adjoint one (rate S, kernel q,
    attenuation Sigma_t - S).
    """

    sense: int
    domain: Domain
    xs: CrossSectionField
    kernel: ScatterKernel
    adjoint: Optional[AdjointKernel]
    tables: TransportTables

    @property
    def name(self):
        return SENSE_NAMES[self.sense]


def _check_compat(domain, kernel):
    if kernel.has_energy != domain.has_energy:
        raise ConfigurationError("kernel and domain disagree on energy dimension")
    lo, hi = domain.omega_bounds
    if kernel.omega_edges[0] > lo or kernel.omega_edges[-1] < hi:
        raise ConfigurationError("kernel bins must cover the domain's omega range")
    if kernel.has_energy:
        lo, hi = domain.energy_bounds
        if kernel.energy_edges[0] > lo or kernel.energy_edges[-1] < hi:
            raise ConfigurationError("kernel bins must cover the domain's energy range")


def _dom_array(domain):
    e = domain.energy_bounds if domain.has_energy else (-np.inf, np.inf)
    return np.array([*domain.x_bounds, *domain.omega_bounds, *e], dtype=np.float64)


def _energy_breaks(grid):
    return grid.energy_breaks if grid.energy_breaks is not None else np.array([0.0, 0.0])


def forward_problem(domain: Domain, xs: CrossSectionField, kernel: ScatterKernel) -> TransportProblem:
    _check_compat(domain, kernel)
    grid = build_phase_grid(xs, kernel)
    cdf = np.ascontiguousarray(
        np.broadcast_to(kernel.cdf[grid.kernel_bin], (grid.nx, grid.n_cells, kernel.n_bins))
    )
    tables = TransportTables(
        _dom_array(domain), grid.x_breaks, grid.omega_breaks, _energy_breaks(grid),
        kernel.has_energy, grid.sigma_s.copy(), grid.sigma_a.copy(), cdf, kernel.bin_bounds(),
    )
    return TransportProblem(FORWARD, domain, xs, kernel, None, tables)


def adjoint_problem(domain: Domain, xs: CrossSectionField, kernel: ScatterKernel,
                    adjoint_kernel: Optional[AdjointKernel] = None) -> TransportProblem:
    _check_compat(domain, kernel)
    adj = adjoint_kernel if adjoint_kernel is not None else build_adjoint_kernel(xs, kernel)
    g = adj.grid
    att = g.sigma_a + g.sigma_s - adj.rate_table
    tables = TransportTables(
        _dom_array(domain), g.x_breaks, g.omega_breaks, _energy_breaks(g), kernel.has_energy,
        adj.rate_table.copy(), att, normalized_cdf(adj.mass_table), g.bounds.copy(),
    )
    return TransportProblem(ADJOINT, domain, xs, kernel, adj, tables)


# -- start banks ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StartBank:
    """Deterministic start states laid out cell by cell on a mesh.

    Iterating yields :class:`PhaseState` objects; ``cell`` holds each start's
    flat cell index in ``mesh``.
    """

    x: np.ndarray
    omega: np.ndarray
    energy: Optional[np.ndarray]
    cell: np.ndarray
    mesh: Optional[Mesh]
    per_cell: int

    def __len__(self):
        return self.x.size

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        e = None if self.energy is None else float(self.energy[i])
        return PhaseState(float(self.x[i]), float(self.omega[i]), e)

    @property
    def n_cells(self):
        return 0 if self.mesh is None else self.mesh.n_cells

    @classmethod
    def from_states(cls, states: Sequence[PhaseState]) -> "StartBank":
        states = list(states)
        if not states:
            raise ConfigurationError("empty start list")
        has_e = states[0].has_energy
        x = np.array([s.x for s in states], dtype=np.float64)
        om = np.array([s.omega for s in states], dtype=np.float64)
        en = np.array([s.energy for s in states], dtype=np.float64) if has_e else None
        return cls(x, om, en, np.zeros(len(states), dtype=np.int64), None, len(states))

    @classmethod
    def repeat(cls, state: PhaseState, n: int) -> "StartBank":
        en = None if state.energy is None else np.full(n, state.energy)
        return cls(np.full(n, state.x), np.full(n, state.omega), en,
                   np.zeros(n, dtype=np.int64), None, n)


def seed_on_mesh(density: RegionDensity, mesh: Mesh, particles_per_cell: int) -> StartBank:
    """``particles_per_cell`` copies of every mesh cell center, cell-major order."""
    if particles_per_cell < 1:
        raise ConfigurationError("particles_per_cell must be >= 1")
    if density.rect.has_energy:
        raise ConfigurationError("mesh seeding supports (x, omega) densities only")
    xc, mc = mesh.x_centers, mesh.omega_centers
    X, M = np.meshgrid(xc, mc, indexing="ij")
    # centers computed from lattice edges may miss a closed support edge by an ulp
    tx = 1e-9 * np.min(np.diff(mesh.x_edges))
    tm = 1e-9 * np.min(np.diff(mesh.omega_edges))
    r = density.rect
    inside = (
        (X >= r.x[0] - tx) & (X <= r.x[1] + tx) & (M >= r.omega[0] - tm) & (M <= r.omega[1] + tm)
    ).ravel()
    if density.value <= 0 or not inside.any():
        raise ConfigurationError("density support contains no mesh cell centers")
    cells = np.flatnonzero(inside)
    cell = np.repeat(cells, particles_per_cell)
    return StartBank(X.ravel()[cell], M.ravel()[cell], None, cell, mesh, particles_per_cell)


def seed_region(density: RegionDensity, domain: Domain, mesh_spacing: Tuple[float, float],
                particles_per_cell: int, convention="centers") -> StartBank:
    ds, da = mesh_spacing
    mesh = region_mesh(density.rect, domain, ds, da, convention)
    bank = seed_on_mesh(density, mesh, particles_per_cell)
    logger.info("seeded %d particles on %d cells (%d per cell)", len(bank),
                len(bank) // particles_per_cell, particles_per_cell)
    return bank


# -- trajectories -----------------------------------------------------------------

@dataclass(frozen=True)
class ScatterEvent:
    step: int
    time: float
    pre: PhaseState
    post: PhaseState


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One recorded history.

    Sample ``i`` is the state at ``times[i]`` (``steps[i] * dt`` in
    discrete mode) together with the attenuation optical depth accumulated
    up to that time.  Sample 0 is the start.  The exit record is kept apart:
    in discrete mode it is the first state at a step boundary outside the
    domain, in exact-event mode it lies on the boundary.
    """

    sense: str
    dt: float
    exact: bool
    steps: np.ndarray
    times: np.ndarray
    x: np.ndarray
    omega: np.ndarray
    energy: Optional[np.ndarray]
    depth: np.ndarray
    scattered: np.ndarray
    exit_step: int
    exit_time: float
    exit_state: PhaseState
    exit_depth: float
    exit_kind: str

    @property
    def start(self) -> PhaseState:
        return self.state(0)

    def state(self, i) -> PhaseState:
        e = None if self.energy is None else float(self.energy[i])
        return PhaseState(float(self.x[i]), float(self.omega[i]), e)

    @property
    def samples(self) -> List[Tuple[int, PhaseState, float]]:
        return [(int(self.steps[i]), self.state(i), float(self.depth[i])) for i in range(self.x.size)]

    @property
    def events(self) -> List[ScatterEvent]:
        out = []
        for i in np.flatnonzero(self.scattered):
            out.append(ScatterEvent(int(self.steps[i]), float(self.times[i]),
                                    PhaseState(float(self.x[i]), float(self.omega[i - 1]),
                                               None if self.energy is None else float(self.energy[i - 1])),
                                    self.state(i)))
        return out

    @property
    def n_events(self):
        return int(self.scattered.sum())


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """Recorded histories as flat row arrays (structure of arrays).

    Rows of particle ``p`` are ``row_start[p]:row_start[p+1]``; the first is
    the start, the last the exit record.
    """

    sense: int
    params: SimulationParams
    seed: int
    starts: StartBank
    has_energy: bool
    row_start: np.ndarray
    step: np.ndarray
    time: np.ndarray
    x: np.ndarray
    omega: np.ndarray
    energy: np.ndarray
    depth: np.ndarray
    flag: np.ndarray
    exit_kind: np.ndarray

    def __len__(self):
        return self.row_start.size - 1

    @property
    def particle(self):
        return np.repeat(np.arange(len(self)), np.diff(self.row_start))

    @property
    def sample_mask(self):
        """Rows that carry scores: every in-domain state after the start."""
        return (self.flag == K.FLAG_SAMPLE) | (self.flag == K.FLAG_SCATTER)

    @property
    def exit_rows(self):
        return self.row_start[1:] - 1

    def trajectory(self, p) -> Trajectory:
        lo, hi = self.row_start[p], self.row_start[p + 1]
        body = slice(lo, hi - 1)
        ex = hi - 1
        en = self.energy[body].copy() if self.has_energy else None
        return Trajectory(
            SENSE_NAMES[self.sense], self.params.dt, self.params.exact_events,
            self.step[body].astype(np.int64), self.time[body].copy(), self.x[body].copy(),
            self.omega[body].copy(), en, self.depth[body].copy(),
            self.flag[body] == K.FLAG_SCATTER,
            int(self.step[ex]), float(self.time[ex]),
            PhaseState(float(self.x[ex]), float(self.omega[ex]),
                       float(self.energy[ex]) if self.has_energy else None),
            float(self.depth[ex]), EXIT_NAMES[int(self.exit_kind[p])],
        )

    def __iter__(self):
        for p in range(len(self)):
            yield self.trajectory(p)


# -- ensemble driver ----------------------------------------------------------------

def _normalize_groups(score) -> Tuple[Tuple[RegionDensity, ...], ...]:
    groups = []
    for g in score:
        if isinstance(g, RegionDensity):
            groups.append((g,))
        else:
            groups.append(tuple(g))
    return tuple(groups)


def _score_arrays(groups):
    rects, vals, gid = [], [], []
    for i, grp in enumerate(groups):
        for d in grp:
            rects.append(d.rect.bounds_array())
            vals.append(d.value)
            gid.append(i)
    if not rects:
        return np.zeros((0, 6)), np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.array(rects), np.array(vals, dtype=np.float64), np.array(gid, dtype=np.int64)


def _breakpoints(problem, sc_rects, mesh):
    lo, hi = problem.domain.x_bounds
    pts = [lo, hi]
    pts += [b for b in problem.tables.x_breaks if np.isfinite(b)]
    pts += list(sc_rects[:, 0]) + list(sc_rects[:, 1])
    if mesh is not None:
        pts += list(mesh.x_edges)
    pts = np.unique(np.array(pts, dtype=np.float64))
    return pts[(pts >= lo) & (pts <= hi)]


@dataclass(frozen=True, eq=False)
class EnsembleRun:
    """Output of one transport pass: per-particle scores, exits and mesh partials.

    ``scores[:, k]`` is the time integral of ``groups[k]`` along each
    history, weighted by the attenuation factor.  ``mesh_sum``/``mesh_sq``
    hold per-chunk sums (and sums of squares) of each history's contribution
    to every mesh cell; ``chunk_sizes`` the particle count of each chunk.
    """

    problem: TransportProblem
    params: SimulationParams
    seed: int
    starts: StartBank
    groups: Tuple[Tuple[RegionDensity, ...], ...]
    scores: np.ndarray
    exit_x: np.ndarray
    exit_omega: np.ndarray
    exit_energy: np.ndarray
    exit_depth: np.ndarray
    exit_kind: np.ndarray
    n_steps: np.ndarray
    n_events: np.ndarray
    n_draws: np.ndarray
    mesh: Optional[Mesh]
    chunk_sizes: np.ndarray
    mesh_sum: np.ndarray
    mesh_sq: np.ndarray
    trajectories: Optional[TrajectoryEnsemble]
    backend: str

    @property
    def sense(self):
        return self.problem.sense

    def __len__(self):
        return self.scores.shape[0]

    def group_index(self, density) -> int:
        key = (density,) if isinstance(density, RegionDensity) else tuple(density)
        try:
            return self.groups.index(key)
        except ValueError:
            raise KeyError(f"density {density} was not scored in this run") from None

    @property
    def census_mask(self):
        return self.exit_kind == K.EXIT_CENSUS

    @property
    def n_census(self):
        return int(self.census_mask.sum())


def run_ensemble(problem: TransportProblem, starts: StartBank, params: SimulationParams, seed: int,
                 score=(), mesh: Optional[Mesh] = None, workers: int = 1, record: bool = False,
                 backend: Optional[str] = None, chunk: Optional[int] = None,
                 first_index: int = 0) -> EnsembleRun:
    """Transport every start and score the requested densities and mesh in one pass.

    Particle ``i`` draws from the stream keyed by ``(seed, sense, first_index + i)``.
    """
    n = len(starts)
    if n == 0:
        raise ConfigurationError("no start states")
    dom = problem.domain
    lo, hi = dom.x_bounds
    bad = (starts.x < lo) | (starts.x > hi) | (starts.omega < dom.omega_bounds[0]) | (
        starts.omega > dom.omega_bounds[1])
    if dom.has_energy:
        if starts.energy is None:
            raise PreconditionError("domain has energy but starts do not")
        bad |= (starts.energy < dom.energy_bounds[0]) | (starts.energy > dom.energy_bounds[1])
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PreconditionError(f"start {starts[i]} lies outside the domain")

    backend = backend or _backend.backend_name()
    if backend == "numba" and not _backend.USE_NUMBA:
        raise ConfigurationError("numba backend requested but numba is disabled")
    groups = _normalize_groups(score)
    sc_rects, sc_vals, sc_group = _score_arrays(groups)
    t = problem.tables
    e0 = starts.energy if starts.energy is not None else np.zeros(n)
    keys = stream_keys(seed, problem.sense, np.arange(first_index, first_index + n))
    mxe = mesh.x_edges if mesh is not None else np.zeros(0)
    mme = mesh.omega_edges if mesh is not None else np.zeros(0)
    n_mesh = mesh.n_cells if mesh is not None else 0
    bp = _breakpoints(problem, sc_rects, mesh)

    def fresh():
        return dict(
            scores=np.zeros((n, len(groups))), exit_x=np.zeros(n), exit_mu=np.zeros(n),
            exit_e=np.zeros(n), exit_depth=np.zeros(n), exit_kind=np.zeros(n, dtype=np.int64),
            n_steps=np.zeros(n, dtype=np.int64), n_events=np.zeros(n, dtype=np.int64),
            n_draws=np.zeros(n, dtype=np.int64),
        )

    vectorized = backend == "numpy" and not params.exact_events and not record
    if backend == "numpy" and not vectorized:
        logger.warning("numpy backend has no vectorized path for %s; running scalar kernels "
                       "interpreted", "exact events" if params.exact_events else "recording")
    chunk = chunk or (NUMPY_CHUNK if vectorized else DEFAULT_CHUNK)
    nch = -(-n // chunk)
    chunk_sizes = np.array([min(chunk, n - i * chunk) for i in range(nch)], dtype=np.int64)

    def scalar_pass(out, rec, offsets):
        csum = np.zeros((nch, max(n_mesh, 1)))
        csq = np.zeros((nch, max(n_mesh, 1)))
        rows = np.zeros(n, dtype=np.int64)
        K.run_chunks(
            starts.x, starts.omega, e0, keys, chunk, problem.sense, params.dt, params.v,
            int(params.max_steps), params.analog, params.exact_events,
            t.dom, t.x_breaks, t.om_b, t.en_b, t.has_e, t.rate, t.att, t.cdf, t.out_b,
            sc_rects, sc_vals, sc_group, out["scores"], mxe, mme, n_mesh, csum, csq, bp,
            rec, offsets, out["exit_x"], out["exit_mu"], out["exit_e"], out["exit_depth"],
            out["exit_kind"], out["n_steps"], out["n_events"], out["n_draws"], rows,
        )
        return csum, csq, rows

    if _backend.USE_NUMBA:
        _backend.set_workers(workers)
    out = fresh()
    traj = None
    if vectorized:
        csum = np.zeros((nch, max(n_mesh, 1)))
        csq = np.zeros((nch, max(n_mesh, 1)))
        for ci in range(nch):
            a, b = ci * chunk, min(n, (ci + 1) * chunk)
            csum[ci], csq[ci] = _vectorized.run_block(
                a, b, starts.x, starts.omega, e0, keys, problem.sense, params.dt, params.v,
                int(params.max_steps), params.analog, t.dom, t.x_breaks, t.om_b, t.en_b, t.has_e,
                t.rate, t.att, t.cdf, t.out_b, sc_rects, sc_vals, sc_group, out["scores"],
                mxe, mme, n_mesh, out["exit_x"], out["exit_mu"], out["exit_e"], out["exit_depth"],
                out["exit_kind"], out["n_steps"], out["n_events"], out["n_draws"],
            )
    elif record:
        probe = fresh()
        scalar_pass(probe, np.zeros((0, K.REC_COLS)), np.zeros(n, dtype=np.int64))
        cap = (probe["n_events"] if params.exact_events else probe["n_steps"]) + 2
        offsets = np.concatenate([[0], np.cumsum(cap)[:-1]]).astype(np.int64)
        rec = np.full((int(cap.sum()), K.REC_COLS), np.nan)
        csum, csq, rows = scalar_pass(out, rec, offsets)
        keep = np.concatenate([np.arange(o, o + r) for o, r in zip(offsets, rows)])
        rec = rec[keep]
        traj = TrajectoryEnsemble(
            problem.sense, params, seed, starts, problem.tables.has_e,
            np.concatenate([[0], np.cumsum(rows)]).astype(np.int64),
            rec[:, 0].astype(np.int64), rec[:, 1], rec[:, 2], rec[:, 3], rec[:, 4], rec[:, 5],
            rec[:, 6].astype(np.int64), out["exit_kind"].copy(),
        )
    else:
        csum, csq, _ = scalar_pass(out, np.zeros((0, K.REC_COLS)), np.zeros(1, dtype=np.int64))

    run = EnsembleRun(
        problem, params, int(seed), starts, groups, out["scores"], out["exit_x"], out["exit_mu"],
        out["exit_e"], out["exit_depth"], out["exit_kind"], out["n_steps"], out["n_events"],
        out["n_draws"], mesh, chunk_sizes, csum[:, :n_mesh], csq[:, :n_mesh], traj, backend,
    )
    if run.n_census:
        logger.warning("%d %s histories hit the census cap of %d steps", run.n_census,
                       problem.name, params.max_steps)
    return run


def simulate_trajectory(problem: TransportProblem, start: PhaseState, params: SimulationParams,
                        rng: ParticleStream) -> Trajectory:
    """Record one history driven by ``rng`` (its key; the counter advances by the draws used)."""
    if not problem.domain.contains(start):
        raise PreconditionError(f"start {start} lies outside the domain")
    if rng.sense != problem.sense:
        raise ValueError("stream sense does not match the problem sense")
    if rng.counter != 0:
        raise ValueError("trajectory streams must start at counter 0")
    run = run_ensemble(problem, StartBank.from_states([start]), params, rng.seed,
                       record=True, backend="numba" if _backend.USE_NUMBA else "numpy",
                       first_index=rng.index)
    rng.counter += int(run.n_draws[0])
    return run.trajectories.trajectory(0)
