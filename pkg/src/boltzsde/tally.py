"""Estimators built on transport ensembles.

Every estimator here is a per-history score averaged over some set of
histories:

* responses average one score over the whole ensemble;
* reuse grids average the same score over the histories started in each
  mesh cell, which estimates the opposite-sense solution at that cell;
* track tallies average each history's time spent in a cell (attenuated,
  divided by the cell measure) over the whole ensemble.

Means and variance accumulators are merged in a fixed order so results do
not depend on the worker count.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .phase_domain import ConfigurationError, Mesh, PhaseState, RegionDensity
from .transport import _kernels as K
from .transport.common import ADJOINT, FORWARD, EnsembleRun, TrajectoryEnsemble

logger = logging.getLogger(__name__)

NORMS = ("l2", "l2-area-weighted", "linf")


class MeshMismatchError(ValueError):
    pass


class EnsembleError(ValueError):
    """The ensemble cannot feed the requested estimator."""


# -- grids -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TallyGrid:
    """Per-cell mean of history scores with a Welford-style accumulator.

    ``count[c]`` is the number of histories averaged in cell ``c``; cells
    with ``count == 0`` are empty and read as NaN.
    """

    mesh: Mesh
    mean: np.ndarray
    m2: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        shape = self.mesh.shape
        for name in ("mean", "m2", "count"):
            a = np.asarray(getattr(self, name))
            if a.shape != shape:
                raise ValueError(f"{name} has shape {a.shape}, mesh is {shape}")
        if np.any(np.asarray(self.count) < 0):
            raise ValueError("negative counts")

    @property
    def shape(self):
        return self.mesh.shape

    @property
    def empty(self):
        return self.count == 0

    @property
    def n_empty(self):
        return int(self.empty.sum())

    @property
    def value(self):
        return np.where(self.empty, np.nan, self.mean)

    @property
    def variance(self):
        """Sample variance of the history scores per cell."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 1, self.m2 / (self.count - 1), np.nan)

    @property
    def stderr(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(self.variance / self.count)

    def scaled(self, c) -> "TallyGrid":
        return TallyGrid(self.mesh, self.mean * c, self.m2 * (c * c), self.count)

    @classmethod
    def from_grouped(cls, mesh: Mesh, cells, values) -> "TallyGrid":
        """Two-pass mean and squared deviations of ``values`` grouped by flat ``cells``."""
        cells = np.asarray(cells, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        n = mesh.n_cells
        count = np.bincount(cells, minlength=n)[:n]
        total = np.bincount(cells, values, minlength=n)[:n]
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(count > 0, total / np.maximum(count, 1), 0.0)
        dev = values - mean[cells]
        m2 = np.bincount(cells, dev * dev, minlength=n)[:n]
        return cls(mesh, mean.reshape(mesh.shape), m2.reshape(mesh.shape), count.reshape(mesh.shape))

    @classmethod
    def from_chunk_sums(cls, mesh: Mesh, sizes, sums, squares) -> "TallyGrid":
        """Merge per-chunk (sum, sum of squares) partials in chunk order.

        Every history of a chunk counts in every cell (histories that never
        visit a cell contribute zero), so each chunk holds ``sizes[k]``
        samples per cell.
        """
        sizes = np.asarray(sizes, dtype=np.int64)
        if sums.shape != (sizes.size, mesh.n_cells):
            raise ValueError("chunk partials do not match the mesh")
        n = 0
        mean = np.zeros(mesh.n_cells)
        m2 = np.zeros(mesh.n_cells)
        for k in range(sizes.size):
            nb = int(sizes[k])
            mb = sums[k] / nb
            m2b = np.maximum(squares[k] - sums[k] * mb, 0.0)
            mean, m2, n = _chan(n, mean, m2, nb, mb, m2b)
        count = np.full(mesh.shape, n, dtype=np.int64)
        return cls(mesh, mean.reshape(mesh.shape), m2.reshape(mesh.shape), count)

    def merge(self, other: "TallyGrid") -> "TallyGrid":
        """Combine two independent tallies over the same cells."""
        if not self.mesh.same_as(other.mesh):
            raise MeshMismatchError("cannot merge grids on different meshes")
        na, nb = self.count.astype(np.float64), other.count.astype(np.float64)
        n = na + nb
        with np.errstate(invalid="ignore", divide="ignore"):
            delta = other.mean - self.mean
            mean = np.where(n > 0, self.mean + delta * nb / np.maximum(n, 1), 0.0)
            m2 = np.where(n > 0, self.m2 + other.m2 + delta * delta * na * nb / np.maximum(n, 1), 0.0)
        return TallyGrid(self.mesh, mean, m2, self.count + other.count)

    # -- files

    def to_csv(self, path):
        """Columns x_center, omega_center, value, stderr, count; x-major rows.

        A leading ``#`` line carries the mesh edges as JSON.
        """
        X, M = np.meshgrid(self.mesh.x_centers, self.mesh.omega_centers, indexing="ij")
        with open(path, "w", newline="\n") as fh:
            fh.write("# mesh " + json.dumps(self.mesh.to_dict()) + "\n")
            fh.write("x_center,omega_center,value,stderr,count\n")
            for xc, mc, v, se, c in zip(X.ravel(), M.ravel(), self.value.ravel(),
                                        self.stderr.ravel(), self.count.ravel()):
                fh.write(f"{_fmt(xc)},{_fmt(mc)},{_fmt(v)},{_fmt(se)},{int(c)}\n")

    @classmethod
    def from_csv(cls, path) -> "TallyGrid":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# mesh "):
                raise ValueError(f"{path}: missing mesh header")
            mesh = Mesh.from_dict(json.loads(first[len("# mesh "):]))
            header = fh.readline().strip()
            if header != "x_center,omega_center,value,stderr,count":
                raise ValueError(f"{path}: unexpected columns {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.shape[0] != mesh.n_cells:
            raise ValueError(f"{path}: {data.shape[0]} rows for {mesh.n_cells} cells")
        count = data[:, 4].astype(np.int64)
        mean = np.where(count > 0, data[:, 2], 0.0)
        se = np.nan_to_num(data[:, 3])
        m2 = se * se * count * np.maximum(count - 1, 0)
        s = mesh.shape
        return cls(mesh, mean.reshape(s), m2.reshape(s), count.reshape(s))

    def to_pgm(self, path, vmin=None, vmax=None):
        """8-bit grayscale heatmap: x left to right, omega bottom to top; empty cells black."""
        v = self.value
        finite = np.isfinite(v)
        lo = float(np.min(v[finite])) if vmin is None and finite.any() else (vmin or 0.0)
        hi = float(np.max(v[finite])) if vmax is None and finite.any() else (vmax or 1.0)
        span = hi - lo if hi > lo else 1.0
        img = np.where(finite, np.clip((np.nan_to_num(v) - lo) / span, 0, 1) * 255, 0)
        img = np.rint(img).astype(np.uint8).T[::-1]
        h, w = img.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(img.tobytes())


def _fmt(v):
    return "nan" if not np.isfinite(v) else repr(float(v))


def _chan(na, mean_a, m2_a, nb, mean_b, m2_b):
    n = na + nb
    if na == 0:
        return mean_b.copy(), m2_b.copy(), nb
    delta = mean_b - mean_a
    mean = mean_a + delta * (nb / n)
    m2 = m2_a + m2_b + delta * delta * (na * nb / n)
    return mean, m2, n


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    w, h = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# -- boundary terms --------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryFunction:
    """Value attached to histories that leave the domain (zero means vacuum).

    ``fn`` maps a boundary :class:`PhaseState` to a float; it is evaluated at
    the exit state with ``x`` clipped onto the domain.
    """

    constant: float = 0.0
    fn: Optional[Callable[[PhaseState], float]] = None

    @classmethod
    def vacuum(cls):
        return cls()

    @property
    def is_vacuum(self):
        return self.fn is None and self.constant == 0.0

    def evaluate(self, x, omega, energy=None):
        x = np.asarray(x, dtype=np.float64)
        if self.fn is None:
            return np.full(x.shape, float(self.constant))
        e = [None] * x.size if energy is None else energy
        return np.array([self.fn(PhaseState(float(a), float(b), None if c is None else float(c)))
                         for a, b, c in zip(x, omega, e)])


VACUUM = BoundaryFunction()


def _boundary_scores(run, boundary: BoundaryFunction):
    if boundary is None or boundary.is_vacuum:
        return None
    lo, hi = run.problem.domain.x_bounds
    left = run.exit_kind == K.EXIT_LEFT
    xb = np.clip(run.exit_x, lo, hi)
    mb = np.clip(run.exit_omega, *run.problem.domain.omega_bounds)
    en = run.exit_energy if run.problem.domain.has_energy else None
    out = np.zeros(len(run))
    idx = np.flatnonzero(left)
    if idx.size:
        vals = boundary.evaluate(xb[idx], mb[idx], None if en is None else en[idx])
        out[idx] = vals * np.exp(-run.exit_depth[idx])
    return out


# -- per-history scores ----------------------------------------------------------

def _check_sense(run, sense, what):
    if run.sense != sense:
        raise EnsembleError(f"{what} needs a {'forward' if sense == FORWARD else 'adjoint'} ensemble")


def _check_weighted(params, allow_analog):
    if params.analog and not allow_analog:
        raise EnsembleError(
            "analog ensembles already remove absorbed particles; pass allow_analog=True "
            "to score them without the attenuation factor")


def _density_row_scores(ens: TrajectoryEnsemble, density: RegionDensity):
    """Re-tally a recorded discrete-time ensemble against ``density``."""
    if ens.params.exact_events:
        raise EnsembleError("exact-event records hold event states only; re-tally needs discrete-time records")
    mask = ens.sample_mask
    r = density.rect
    x, mu = ens.x, ens.omega
    inside = mask & (x >= r.x[0]) & (x <= r.x[1]) & (mu >= r.omega[0]) & (mu <= r.omega[1])
    if r.energy is not None:
        inside &= (ens.energy >= r.energy[0]) & (ens.energy <= r.energy[1])
    w = np.where(inside, density.value * (np.exp(-ens.depth) * ens.params.dt), 0.0)
    return np.bincount(ens.particle, w, minlength=len(ens))


def history_scores(run: Union[EnsembleRun, TrajectoryEnsemble], density: RegionDensity,
                   boundary: Optional[BoundaryFunction] = None):
    """Attenuated time integral of ``density`` along each history, plus the boundary term."""
    if isinstance(run, TrajectoryEnsemble):
        if boundary is not None and not boundary.is_vacuum:
            raise EnsembleError("boundary terms on recorded ensembles are not supported")
        if not isinstance(density, RegionDensity):
            return sum(_density_row_scores(run, d) for d in density)
        return _density_row_scores(run, density)
    if isinstance(density, RegionDensity) and density.value == 0.0:
        base = np.zeros(len(run))
    else:
        base = run.scores[:, run.group_index(density)]
    extra = _boundary_scores(run, boundary)
    return base if extra is None else base + extra


def _response(run, density, boundary, allow_analog, sense, what):
    _check_sense(run, sense, what)
    _check_weighted(run.params, allow_analog)
    if isinstance(run, EnsembleRun) and run.n_census:
        logger.warning("%d census-capped histories included in the response", run.n_census)
    s = history_scores(run, density, boundary)
    n = s.size
    mean = float(np.mean(s))
    se = float(np.std(s, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return mean, se


def response_from_forward(run, g: RegionDensity, boundary: Optional[BoundaryFunction] = None,
                          allow_analog=False):
    """Mean and standard error of the detector score over forward histories."""
    return _response(run, g, boundary, allow_analog, FORWARD, "response_from_forward")


def response_from_adjoint(run, f: RegionDensity, boundary: Optional[BoundaryFunction] = None,
                          allow_analog=False):
    """Mean and standard error of the source score over adjoint histories."""
    return _response(run, f, boundary, allow_analog, ADJOINT, "response_from_adjoint")


def _reuse_grid(run, density, boundary, allow_analog, sense, what):
    _check_sense(run, sense, what)
    _check_weighted(run.params, allow_analog)
    starts = run.starts
    if starts.mesh is None:
        raise EnsembleError(f"{what} needs an ensemble seeded on a mesh")
    s = history_scores(run, density, boundary)
    kind = run.exit_kind
    keep = kind != K.EXIT_CENSUS
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("%s: excluded %d census-capped histories", what, dropped)
    grid = TallyGrid.from_grouped(starts.mesh, starts.cell[keep], s[keep])
    if grid.n_empty:
        logger.info("%s: %d cells without starts", what, grid.n_empty)
    return grid


def adjoint_flux_from_forward(run, g: RegionDensity, boundary: BoundaryFunction = VACUUM,
                              allow_analog=False) -> TallyGrid:
    """Adjoint flux on the source mesh: per-cell mean detector score of forward histories."""
    return _reuse_grid(run, g, boundary, allow_analog, FORWARD, "adjoint_flux_from_forward")


def flux_from_adjoint(run, f: RegionDensity, boundary: BoundaryFunction = VACUUM,
                      allow_analog=False) -> TallyGrid:
    """Flux on the detector mesh: per-cell mean source score of adjoint histories."""
    return _reuse_grid(run, f, boundary, allow_analog, ADJOINT, "flux_from_adjoint")


def _track_from_records(ens: TrajectoryEnsemble, mesh: Mesh):
    if ens.params.exact_events:
        raise EnsembleError("exact-event records cannot be re-tallied on a mesh")
    mask = ens.sample_mask
    cell = mesh.locate(ens.x, ens.omega)
    sel = mask & (cell >= 0)
    p = ens.particle[sel]
    c = cell[sel]
    w = np.exp(-ens.depth[sel]) * ens.params.dt
    n = len(ens)
    nc = mesh.n_cells
    key = p * nc + c
    uniq, inv = np.unique(key, return_inverse=True)
    hist = np.bincount(inv, w, minlength=uniq.size)
    hc = uniq % nc
    meas = mesh.cell_measure.ravel()
    hist = hist / meas[hc]
    total = np.bincount(hc, hist, minlength=nc)
    mean = total / n
    m2 = np.bincount(hc, (hist - mean[hc]) ** 2, minlength=nc)
    m2 += (n - np.bincount(hc, minlength=nc)) * mean * mean
    s = mesh.shape
    return TallyGrid(mesh, mean.reshape(s), m2.reshape(s), np.full(s, n, dtype=np.int64))


def _track_tally(run, mesh, allow_analog, sense, what):
    _check_sense(run, sense, what)
    _check_weighted(run.params, allow_analog)
    if isinstance(run, TrajectoryEnsemble):
        if mesh is None:
            raise EnsembleError(f"{what} on a recorded ensemble needs a mesh")
        return _track_from_records(run, mesh)
    if run.mesh is None:
        raise EnsembleError(f"{what}: the ensemble was run without a tally mesh")
    if mesh is not None and not mesh.same_as(run.mesh):
        raise MeshMismatchError(f"{what}: requested mesh differs from the scored mesh")
    meas = run.mesh.cell_measure.ravel()
    return TallyGrid.from_chunk_sums(run.mesh, run.chunk_sizes, run.mesh_sum / meas,
                                     run.mesh_sq / (meas * meas))


def forward_flux_tally(run, mesh: Optional[Mesh] = None, allow_analog=False) -> TallyGrid:
    """Track-length flux estimate per cell, per source particle."""
    return _track_tally(run, mesh, allow_analog, FORWARD, "forward_flux_tally")


def adjoint_flux_tally(run, mesh: Optional[Mesh] = None, allow_analog=False) -> TallyGrid:
    """Track-length adjoint flux estimate per cell, per detector particle."""
    return _track_tally(run, mesh, allow_analog, ADJOINT, "adjoint_flux_tally")


# -- comparisons -------------------------------------------------------------------

def grid_norm_diff(a: TallyGrid, b: TallyGrid, norm: str = "l2") -> float:
    """Norm of the cellwise difference over cells that are non-empty in both."""
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    if not a.mesh.same_as(b.mesh):
        raise MeshMismatchError("grids live on different meshes")
    ok = ~(a.empty | b.empty)
    d = (a.mean - b.mean)[ok]
    if d.size == 0:
        return 0.0
    if norm == "l2":
        return float(np.sqrt(np.sum(d * d)))
    if norm == "linf":
        return float(np.max(np.abs(d)))
    w = a.mesh.cell_measure[ok]
    return float(np.sqrt(np.sum(w * d * d)))


def all_norms(a: TallyGrid, b: TallyGrid):
    return {n: grid_norm_diff(a, b, n) for n in NORMS}


def cell_overlap(mesh: Mesh, rect) -> np.ndarray:
    """Measure of each mesh cell's intersection with ``rect``."""
    def overlap(edges, lo, hi):
        return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)

    return np.outer(overlap(mesh.x_edges, *rect.x), overlap(mesh.omega_edges, *rect.omega))


def inner_product(grid: TallyGrid, density: RegionDensity) -> float:
    """Sum over cells of value times the integral of ``density`` over the cell."""
    w = density.value * cell_overlap(grid.mesh, density.rect)
    v = grid.value
    used = w > 0
    if np.any(used & grid.empty):
        raise EnsembleError("density support overlaps empty cells")
    return float(np.sum(np.where(used, v, 0.0) * w))
