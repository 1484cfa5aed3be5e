"""Deterministic references: discrete-ordinates slab solver and pure-absorber rays.

The slab solver uses diamond differencing and source iteration.  Forward and
adjoint problems share one sweep; the adjoint one streams along ``-mu`` and
applies the transposed scattering operator.  With the inner product
``<a, b> = sum_i h_i sum_k w_k a_ik b_ik`` the discrete forward and adjoint
operators are exact transposes of each other, so the discrete duality
``<psi, f> = <g, phi>`` holds up to the iteration tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from ._backend import jit
from .phase_domain import (
    ConfigurationError,
    CrossSectionField,
    Domain,
    Mesh,
    PhaseState,
    RegionDensity,
    ScatterKernel,
)

logger = logging.getLogger(__name__)

QUADRATURES = ("gauss-legendre", "equal-weight")


class ConvergenceError(RuntimeError):
    def __init__(self, msg, iterations, spectral_radius):
        super().__init__(msg)
        self.iterations = iterations
        self.spectral_radius = spectral_radius


class UndefinedRayError(ValueError):
    """A ray with omega = 0 never moves."""


@dataclass(frozen=True, eq=False)
class SnGrid:
    x_edges: np.ndarray
    mu: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_edges, dtype=np.float64)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ConfigurationError("x_edges must be strictly increasing")
        mu = np.asarray(self.mu, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if mu.shape != w.shape or mu.ndim != 1:
            raise ConfigurationError("mu and weights must be matching vectors")
        if np.any(w <= 0) or np.any(np.abs(mu) > 1):
            raise ConfigurationError("weights must be positive and |mu| <= 1")
        object.__setattr__(self, "x_edges", x)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, x_bounds, n_cells, n_ordinates, quadrature="gauss-legendre"):
        if quadrature not in QUADRATURES:
            raise ConfigurationError(f"quadrature must be one of {QUADRATURES}")
        if n_cells < 1 or n_ordinates < 2:
            raise ConfigurationError("need at least 1 cell and 2 ordinates")
        x = np.linspace(x_bounds[0], x_bounds[1], n_cells + 1)
        if quadrature == "gauss-legendre":
            mu, w = np.polynomial.legendre.leggauss(n_ordinates)
        else:
            w = np.full(n_ordinates, 2.0 / n_ordinates)
            mu = -1.0 + (np.arange(n_ordinates) + 0.5) * (2.0 / n_ordinates)
        return cls(x, mu, w)

    @property
    def h(self):
        return np.diff(self.x_edges)

    @property
    def x_centers(self):
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1])

    @property
    def shape(self):
        return self.x_edges.size - 1, self.mu.size

    def inner(self, a, b) -> float:
        return float(np.sum(self.h[:, None] * self.weights[None, :] * a * b))


@dataclass(frozen=True, eq=False)
class SnSolution:
    grid: SnGrid
    sense: int
    psi: np.ndarray  # [cells, ordinates], cell averages
    source: np.ndarray
    iterations: int
    residual: float
    spectral_radius: float
    rate_history: np.ndarray
    negative: bool

    @property
    def scalar_flux(self):
        return self.psi @ self.grid.weights

    def inner(self, density: RegionDensity) -> float:
        return self.grid.inner(self.psi, source_array(self.grid, density))

    def project(self, mesh: Mesh) -> np.ndarray:
        """Average onto a tally mesh: cell overlap in x, ordinates inside each omega cell."""
        g = self.grid
        ox = np.clip(np.minimum(mesh.x_edges[1:, None], g.x_edges[None, 1:])
                     - np.maximum(mesh.x_edges[:-1, None], g.x_edges[None, :-1]), 0, None)
        xs = ox @ self.psi / ox.sum(axis=1, keepdims=True)
        cell = np.searchsorted(mesh.omega_edges, g.mu, "right") - 1
        nm = mesh.omega_edges.size - 1
        ok = (cell >= 0) & (cell < nm)
        out = np.full((xs.shape[0], nm), np.nan)
        for c in range(nm):
            sel = ok & (cell == c)
            if sel.any():
                out[:, c] = xs[:, sel] @ g.weights[sel] / g.weights[sel].sum()
        return out

    def to_tally_grid(self, mesh: Mesh):
        from .tally import TallyGrid

        v = self.project(mesh)
        count = np.where(np.isfinite(v), 1, 0)
        return TallyGrid(mesh, np.nan_to_num(v), np.zeros(mesh.shape), count)


def source_array(grid: SnGrid, density: RegionDensity) -> np.ndarray:
    """Cell-averaged density in x; closed membership in omega at each ordinate."""
    r = density.rect
    if r.has_energy:
        raise ConfigurationError("the slab solver is monoenergetic")
    e = grid.x_edges
    frac = np.clip(np.minimum(e[1:], r.x[1]) - np.maximum(e[:-1], r.x[0]), 0, None) / np.diff(e)
    inside = (grid.mu >= r.omega[0]) & (grid.mu <= r.omega[1])
    return density.value * frac[:, None] * inside[None, :]


def _cell_tables(grid, xs, kernel):
    if kernel.has_energy:
        raise ConfigurationError("the slab solver is monoenergetic")
    xc = grid.x_centers
    nx, K = grid.shape
    sig_s = np.empty((nx, K))
    sig_t = np.empty((nx, K))
    for i in range(nx):
        for k in range(K):
            s = PhaseState(float(xc[i]), float(grid.mu[k]))
            sig_s[i, k] = xs.sigma_s(s)
            sig_t[i, k] = xs.sigma_t(s)
    bins = np.array([kernel.bin_index(float(m)) for m in grid.mu])
    return sig_s, sig_t, bins


@jit
def _sweep_numba(q, sig_t, mu, h, sense, psi):
    nx, K = q.shape
    neg = False
    for k in range(K):
        m = sense * mu[k]
        if m == 0.0:
            for i in range(nx):
                psi[i, k] = q[i, k] / sig_t[i, k]
            continue
        am = abs(m)
        edge = 0.0
        for n in range(nx):
            i = n if m > 0 else nx - 1 - n
            tau = sig_t[i, k] * h[i] / am
            out = ((1.0 - 0.5 * tau) * edge + q[i, k] * h[i] / am) / (1.0 + 0.5 * tau)
            psi[i, k] = 0.5 * (edge + out)
            if out < -1e-12:
                neg = True
            edge = out
    return neg


def _sweep_numpy(q, sig_t, mu, h, sense, psi):
    nx, K = q.shape
    m = sense * mu
    neg = False
    zero = m == 0.0
    if zero.any():
        psi[:, zero] = q[:, zero] / sig_t[:, zero]
    for sel, order in ((m > 0, range(nx)), (m < 0, range(nx - 1, -1, -1))):
        if not sel.any():
            continue
        am = np.abs(m[sel])
        edge = np.zeros(am.size)
        for i in order:
            tau = sig_t[i, sel] * h[i] / am
            out = ((1.0 - 0.5 * tau) * edge + q[i, sel] * h[i] / am) / (1.0 + 0.5 * tau)
            psi[i, sel] = 0.5 * (edge + out)
            neg = neg or bool(np.any(out < -1e-12))
            edge = out
    return neg


def _solve(sense, domain, xs, kernel, density, grid, tol, max_iter, backend):
    if not isinstance(domain, Domain):
        raise ConfigurationError("domain must be a Domain")
    if not np.allclose(grid.x_edges[[0, -1]], domain.x_bounds):
        raise ConfigurationError("SnGrid must span the domain's x bounds")
    sweep = _sweep_numba if (backend or _backend.backend_name()) == "numba" else _sweep_numpy
    sig_s, sig_t, bins = _cell_tables(grid, xs, kernel)
    if np.any((sig_t == 0) & (grid.mu[None, :] == 0)):
        raise ConfigurationError("omega = 0 ordinate in a void cell")
    P = kernel.table
    width = kernel.bin_widths()
    nb = kernel.n_bins
    onehot = np.zeros((grid.mu.size, nb))
    onehot[np.arange(grid.mu.size), bins] = 1.0
    w = grid.weights
    Q = source_array(grid, density)
    psi = np.zeros(grid.shape)
    h = grid.h

    def scatter(psi):
        if sense > 0:
            mom = (sig_s * psi * w) @ onehot          # [nx, nb]: Sigma_s-weighted flux per bin
            return (mom @ P)[:, bins] / width[bins]
        mom = (psi * w) @ onehot / width              # [nx, nb]: flux density per outcome bin
        return sig_s * (mom @ P.T)[:, bins]

    def binned(psi):
        return (psi * w) @ onehot

    prev = binned(psi)
    neg = False
    changes = []
    it = 0
    resid = math.inf
    for it in range(1, max_iter + 1):
        new = np.empty_like(psi)
        neg = sweep(Q + scatter(psi), sig_t, grid.mu, h, sense, new) or neg
        psi = new
        cur = binned(psi)
        scale = np.max(np.abs(cur))
        diff = np.max(np.abs(cur - prev))
        resid = diff / scale if scale > 0 else 0.0
        changes.append(diff)
        prev = cur
        if resid < tol:
            break
    else:
        rho = _rate(changes)
        raise ConvergenceError(f"no convergence in {max_iter} iterations "
                               f"(spectral radius estimate {rho:.4f})", max_iter, rho)
    rates = np.array(changes[1:]) / np.maximum(np.array(changes[:-1]), 1e-300)
    if neg:
        logger.warning("diamond difference produced negative edge fluxes")
    return SnSolution(grid, sense, psi, Q, it, resid, _rate(changes), rates, neg)


def _rate(changes):
    c = [d for d in changes if d > 0]
    if len(c) < 3:
        return 0.0
    tail = c[-min(len(c) - 1, 5):]
    prev = c[-len(tail) - 1:-1]
    return float(np.exp(np.mean(np.log(np.array(tail) / np.array(prev)))))


def solve_forward_deterministic(domain: Domain, xs: CrossSectionField, kernel: ScatterKernel,
                                source: RegionDensity, grid: SnGrid, tol=1e-8, max_iter=10_000,
                                backend: Optional[str] = None) -> SnSolution:
    """Flux with vacuum inflow for the source density ``source``."""
    return _solve(1, domain, xs, kernel, source, grid, tol, max_iter, backend)


def solve_adjoint_deterministic(domain: Domain, xs: CrossSectionField, kernel: ScatterKernel,
                                detector: RegionDensity, grid: SnGrid, tol=1e-8, max_iter=10_000,
                                backend: Optional[str] = None) -> SnSolution:
    """Adjoint flux with vacuum outflow condition for the detector density ``detector``."""
    return _solve(-1, domain, xs, kernel, detector, grid, tol, max_iter, backend)


def analytic_pure_absorber(start: PhaseState, region: RegionDensity, xs: CrossSectionField,
                           v: float = 1.0, domain: Optional[Domain] = None, sense: int = 1) -> float:
    """Attenuated residence time of the straight ray from ``start`` in ``region``.

    The ray moves with velocity ``sense * v * omega`` and stops when it
    leaves ``domain`` (if given).  Absorption is integrated exactly over the
    piecewise-constant cross sections.  Adjoint rays (``sense=-1``) are
    attenuated by Sigma_t - S, which equals Sigma_a when nothing scatters.
    """
    if start.omega == 0.0:
        raise UndefinedRayError("omega = 0: the ray never moves")
    if xs.default_sigma_s != 0 or any(o.sigma_s != 0 for o in xs.overrides):
        raise ConfigurationError("pure-absorber rays need sigma_s = 0 everywhere")
    r = region.rect
    if not (r.omega[0] <= start.omega <= r.omega[1]):
        return 0.0
    if r.energy is not None and not (r.energy[0] <= start.energy <= r.energy[1]):
        return 0.0
    vel = sense * v * start.omega
    x0 = start.x
    far = math.inf if vel > 0 else -math.inf
    if domain is not None:
        if not domain.contains(start):
            return 0.0
        far = domain.x_bounds[1] if vel > 0 else domain.x_bounds[0]
    pts = {x0, r.x[0], r.x[1]}
    pts.update(b for b in xs.breakpoints("x") if np.isfinite(b))
    if np.isfinite(far):
        pts.add(far)
    lo, hi = (x0, far) if vel > 0 else (far, x0)
    ordered = sorted(p for p in pts if lo <= p <= hi)
    if vel < 0:
        ordered = ordered[::-1]
    depth = 0.0
    total = 0.0
    for a, b in zip(ordered[:-1], ordered[1:]):
        t = (b - a) / vel
        if t <= 0:
            continue
        mid = 0.5 * (a + b)
        s = PhaseState(mid, start.omega, start.energy)
        lam = xs.sigma_a(s) * v
        if r.x[0] <= mid <= r.x[1]:
            seg = t if lam == 0 else -math.expm1(-lam * t) / lam
            total += region.value * math.exp(-depth) * seg
        depth += lam * t
    return total
