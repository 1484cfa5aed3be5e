"""Phase-space geometry, cross sections, scattering laws and their adjoints.

States live in (x, omega[, energy]) space.  All rectangles are closed sets.
Cross sections are piecewise constant over phase-space rectangles, so every
derived quantity (the adjoint scattering rate S and kernel q) is piecewise
constant on the common refinement of the override rectangles and the kernel
bins.  That refinement, :class:`PhaseGrid`, is what the transport kernels
consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

Interval = Tuple[float, float]


class ConfigurationError(ValueError):
    """Invalid problem definition (bad bounds, dimensionality, support...)."""


class DegenerateKernelError(ArithmeticError):
    """The adjoint kernel q was requested where the adjoint rate S is zero."""


def _interval(value, name, allow_degenerate=True) -> Interval:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a pair of numbers, got {value!r}")
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigurationError(f"{name} must be finite, got {value!r}")
    if hi < lo or (hi == lo and not allow_degenerate):
        raise ConfigurationError(f"{name} must satisfy lo <= hi, got {value!r}")
    return lo, hi


def _in(v, iv):
    return iv[0] <= v <= iv[1]


@dataclass(frozen=True)
class PhaseState:
    x: float
    omega: float
    energy: Optional[float] = None

    def __post_init__(self):
        if not -1.0 <= self.omega <= 1.0:
            raise ValueError(f"direction cosine {self.omega} outside [-1, 1]")

    @property
    def has_energy(self):
        return self.energy is not None


@dataclass(frozen=True)
class Rect:
    """Closed rectangle x-interval x omega-interval [x energy-interval]."""

    x: Interval
    omega: Interval = (-1.0, 1.0)
    energy: Optional[Interval] = None

    def __post_init__(self):
        object.__setattr__(self, "x", _interval(self.x, "x"))
        object.__setattr__(self, "omega", _interval(self.omega, "omega"))
        if self.energy is not None:
            object.__setattr__(self, "energy", _interval(self.energy, "energy"))

    @property
    def has_energy(self):
        return self.energy is not None

    @property
    def measure(self):
        m = (self.x[1] - self.x[0]) * (self.omega[1] - self.omega[0])
        if self.energy is not None:
            m *= self.energy[1] - self.energy[0]
        return m

    def contains(self, s: PhaseState) -> bool:
        if s.has_energy != self.has_energy:
            raise ConfigurationError(
                "state and rectangle disagree on energy dimension "
                f"(state {'has' if s.has_energy else 'lacks'} energy)"
            )
        if not (_in(s.x, self.x) and _in(s.omega, self.omega)):
            return False
        return self.energy is None or _in(s.energy, self.energy)

    def bounds_array(self):
        """``[xlo, xhi, mlo, mhi, elo, ehi]`` with infinite energy bounds if absent."""
        e = self.energy if self.energy is not None else (-np.inf, np.inf)
        return np.array([*self.x, *self.omega, *e], dtype=np.float64)


@dataclass(frozen=True)
class Domain:
    x_bounds: Interval
    omega_bounds: Interval = (-1.0, 1.0)
    energy_bounds: Optional[Interval] = None

    def __post_init__(self):
        object.__setattr__(self, "x_bounds", _interval(self.x_bounds, "x_bounds", False))
        ob = _interval(self.omega_bounds, "omega_bounds", False)
        if ob[0] < -1.0 or ob[1] > 1.0:
            raise ConfigurationError(f"omega_bounds {ob} not inside [-1, 1]")
        object.__setattr__(self, "omega_bounds", ob)
        if self.energy_bounds is not None:
            object.__setattr__(
                self, "energy_bounds", _interval(self.energy_bounds, "energy_bounds", False)
            )

    @property
    def has_energy(self):
        return self.energy_bounds is not None

    @property
    def rect(self) -> Rect:
        return Rect(self.x_bounds, self.omega_bounds, self.energy_bounds)

    def contains(self, s: PhaseState) -> bool:
        return self.rect.contains(s)


@dataclass(frozen=True)
class RegionDensity:
    """Constant density on a closed rectangle, zero elsewhere."""

    rect: Rect
    value: float
    normalized: bool = False

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ConfigurationError(f"density value must be finite and >= 0, got {self.value}")
        if self.normalized:
            m = self.rect.measure
            if m <= 0:
                raise ConfigurationError("normalized density on a zero-measure rectangle")
            if self.value != 1.0 / m:
                raise ConfigurationError("normalized density must have value 1/measure(rect)")

    @classmethod
    def indicator(cls, rect: Rect, normalized=True, value=1.0) -> "RegionDensity":
        """Normalized indicator ``chi_R / measure(R)`` (or ``value * chi_R``)."""
        if normalized:
            m = rect.measure
            if m <= 0:
                raise ConfigurationError("normalized density on a zero-measure rectangle")
            return cls(rect, 1.0 / m, True)
        return cls(rect, float(value), False)

    def __call__(self, s: PhaseState) -> float:
        return self.value if self.rect.contains(s) else 0.0

    def scaled(self, c) -> "RegionDensity":
        return RegionDensity(self.rect, self.value * c, False)


def region_contains(region: RegionDensity, s: PhaseState) -> bool:
    return region.rect.contains(s)


def density_eval(region: RegionDensity, s: PhaseState) -> float:
    return region(s)


# -- cross sections -----------------------------------------------------------

@dataclass(frozen=True)
class CrossSectionOverride:
    rect: Rect
    sigma_a: float
    sigma_s: float


@dataclass(frozen=True)
class CrossSectionField:
    """Piecewise-constant absorption and scattering cross sections (1/cm).

    Overrides are scanned last to first; the last rectangle containing the
    state wins.
    """

    default_sigma_a: float
    default_sigma_s: float
    overrides: Tuple[CrossSectionOverride, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "overrides", tuple(self.overrides))
        vals = [(self.default_sigma_a, self.default_sigma_s)]
        vals += [(o.sigma_a, o.sigma_s) for o in self.overrides]
        for a, s in vals:
            if not (np.isfinite(a) and np.isfinite(s)) or a < 0 or s < 0:
                raise ConfigurationError(f"cross sections must be finite and >= 0, got ({a}, {s})")

    def _lookup(self, s: PhaseState):
        for o in reversed(self.overrides):
            if o.rect.has_energy and not s.has_energy:
                raise ConfigurationError("energy-dependent override on a monoenergetic state")
            if _in(s.x, o.rect.x) and _in(s.omega, o.rect.omega) and (
                o.rect.energy is None or _in(s.energy, o.rect.energy)
            ):
                return o.sigma_a, o.sigma_s
        return self.default_sigma_a, self.default_sigma_s

    def sigma_a(self, s: PhaseState) -> float:
        return self._lookup(s)[0]

    def sigma_s(self, s: PhaseState) -> float:
        return self._lookup(s)[1]

    def sigma_t(self, s: PhaseState) -> float:
        a, sc = self._lookup(s)
        return a + sc

    @property
    def is_constant(self):
        return all(
            o.sigma_a == self.default_sigma_a and o.sigma_s == self.default_sigma_s
            for o in self.overrides
        )

    def breakpoints(self, axis):
        pts = set()
        for o in self.overrides:
            iv = getattr(o.rect, axis)
            if iv is not None:
                pts.update(iv)
        return sorted(pts)

    @property
    def max_sigma_t(self):
        return max(
            [self.default_sigma_a + self.default_sigma_s]
            + [o.sigma_a + o.sigma_s for o in self.overrides]
        )


# -- scattering kernels -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScatterKernel:
    """Conditional density p(omega', E' | omega, E) on a tensor grid of bins.

    ``table[a, b]`` is the probability that a particle whose pre-scatter
    state lies in bin ``a`` leaves in bin ``b``; within a bin the outcome is
    uniform.  Bins are flattened omega-major: ``b = i_omega * n_energy + i_energy``.
    The uniform-isotropic law is the one-bin special case.
    """

    kind: str
    omega_edges: np.ndarray
    table: np.ndarray
    energy_edges: Optional[np.ndarray] = None
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("uniform-isotropic", "tabulated-discrete"):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        om = np.asarray(self.omega_edges, dtype=np.float64)
        if om.ndim != 1 or om.size < 2 or np.any(np.diff(om) <= 0):
            raise ConfigurationError("omega_edges must be strictly increasing with >= 2 entries")
        if om[0] < -1.0 or om[-1] > 1.0:
            raise ConfigurationError("omega_edges must lie inside [-1, 1]")
        en = None
        if self.energy_edges is not None:
            en = np.asarray(self.energy_edges, dtype=np.float64)
            if en.ndim != 1 or en.size < 2 or np.any(np.diff(en) <= 0):
                raise ConfigurationError("energy_edges must be strictly increasing")
        n = (om.size - 1) * (1 if en is None else en.size - 1)
        t = np.asarray(self.table, dtype=np.float64)
        if t.shape != (n, n):
            raise ConfigurationError(f"kernel table must be {n}x{n}, got {t.shape}")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ConfigurationError("kernel table entries must be finite and >= 0")
        rows = t.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ConfigurationError(f"kernel rows must sum to 1 within 1e-12, got {rows}")
        object.__setattr__(self, "omega_edges", om)
        object.__setattr__(self, "energy_edges", en)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "_cdf", normalized_cdf(t))

    @classmethod
    def uniform(cls, omega_bounds=(-1.0, 1.0), energy_bounds=None) -> "ScatterKernel":
        en = None if energy_bounds is None else np.array(energy_bounds, dtype=np.float64)
        return cls("uniform-isotropic", np.array(omega_bounds, dtype=np.float64), np.ones((1, 1)), en)

    @classmethod
    def tabulated(cls, omega_edges, table, energy_edges=None) -> "ScatterKernel":
        return cls("tabulated-discrete", omega_edges, table, energy_edges)

    @property
    def has_energy(self):
        return self.energy_edges is not None

    @property
    def n_omega(self):
        return self.omega_edges.size - 1

    @property
    def n_energy(self):
        return 1 if self.energy_edges is None else self.energy_edges.size - 1

    @property
    def n_bins(self):
        return self.n_omega * self.n_energy

    @property
    def cdf(self):
        return self._cdf

    def bin_bounds(self):
        """Array ``[n_bins, 4]`` of ``(mlo, mhi, elo, ehi)``; energy 0 if absent."""
        out = np.zeros((self.n_bins, 4))
        en = self.energy_edges if self.has_energy else np.zeros(2)
        for i in range(self.n_omega):
            for k in range(self.n_energy):
                out[i * self.n_energy + k] = (
                    self.omega_edges[i], self.omega_edges[i + 1], en[k], en[k + 1]
                )
        return out

    def bin_widths(self):
        b = self.bin_bounds()
        w = b[:, 1] - b[:, 0]
        if self.has_energy:
            w = w * (b[:, 3] - b[:, 2])
        return w

    def bin_index(self, omega, energy=None) -> int:
        """Bin of a point; closed bins, points on interior edges go up."""
        if (energy is not None) != self.has_energy:
            raise ConfigurationError("state and kernel disagree on energy dimension")
        if not _in(omega, (self.omega_edges[0], self.omega_edges[-1])):
            raise ConfigurationError(f"omega={omega} outside kernel support")
        i = min(int(np.searchsorted(self.omega_edges, omega, "right")) - 1, self.n_omega - 1)
        k = 0
        if self.has_energy:
            if not _in(energy, (self.energy_edges[0], self.energy_edges[-1])):
                raise ConfigurationError(f"energy={energy} outside kernel support")
            k = min(int(np.searchsorted(self.energy_edges, energy, "right")) - 1, self.n_energy - 1)
        return i * self.n_energy + k

    def probabilities(self, cond: PhaseState) -> np.ndarray:
        return self.table[self.bin_index(cond.omega, cond.energy)]

    def density(self, out: PhaseState, cond: PhaseState) -> float:
        a = self.bin_index(cond.omega, cond.energy)
        b = self.bin_index(out.omega, out.energy)
        return self.table[a, b] / self.bin_widths()[b]

    def sample(self, cond: PhaseState, stream) -> PhaseState:
        """Draw the post-scatter (omega, E); always consumes three uniforms."""
        a = self.bin_index(cond.omega, cond.energy)
        u1, u2, u3 = stream.uniform(), stream.uniform(), stream.uniform()
        b = pick_bin(self._cdf[a], u1)
        mlo, mhi, elo, ehi = self.bin_bounds()[b]
        om = mlo + u2 * (mhi - mlo)
        en = elo + u3 * (ehi - elo) if self.has_energy else None
        return PhaseState(cond.x, om, en)


def normalized_cdf(masses):
    """Row-wise cumulative sums rescaled so every nonzero row ends at exactly 1."""
    c = np.cumsum(np.asarray(masses, dtype=np.float64), axis=-1)
    tot = c[..., -1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(tot > 0, c / np.where(tot > 0, tot, 1.0), 0.0)
    c[..., -1] = np.where(tot[..., 0] > 0, 1.0, 0.0)
    return c


def pick_bin(cdf_row, u):
    b = int(np.searchsorted(cdf_row, u, "right"))
    return min(b, cdf_row.size - 1)


# -- refinement grid ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """Common refinement of cross-section overrides and kernel bins.

    ``x_breaks`` starts at -inf and ends at +inf; x-interval ``i`` is
    ``[x_breaks[i], x_breaks[i+1])``.  Fine (omega, E) cells are flattened
    omega-major.  Cross sections are constant on every (x-interval, cell)
    product, evaluated at its midpoint.
    """

    x_breaks: np.ndarray
    omega_breaks: np.ndarray
    energy_breaks: Optional[np.ndarray]
    sigma_a: np.ndarray  # [nx, nc]
    sigma_s: np.ndarray  # [nx, nc]
    kernel_bin: np.ndarray  # [nc]
    widths: np.ndarray  # [nc]
    bounds: np.ndarray  # [nc, 4]

    @property
    def nx(self):
        return self.x_breaks.size - 1

    @property
    def n_cells(self):
        return self.kernel_bin.size

    @property
    def n_energy(self):
        return 1 if self.energy_breaks is None else self.energy_breaks.size - 1

    def x_index(self, x) -> int:
        return min(int(np.searchsorted(self.x_breaks, x, "right")) - 1, self.nx - 1)

    def cell_index(self, omega, energy=None) -> int:
        n_om = self.omega_breaks.size - 1
        i = min(max(int(np.searchsorted(self.omega_breaks, omega, "right")) - 1, 0), n_om - 1)
        k = 0
        if self.energy_breaks is not None:
            ne = self.energy_breaks.size - 1
            k = min(max(int(np.searchsorted(self.energy_breaks, energy, "right")) - 1, 0), ne - 1)
        return i * self.n_energy + k


def _refine(base_edges, extra):
    lo, hi = base_edges[0], base_edges[-1]
    pts = set(float(e) for e in base_edges)
    pts.update(float(p) for p in extra if lo < p < hi)
    return np.array(sorted(pts))


def _x_mid(lo, hi):
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo):
        return hi - 1.0
    if np.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def build_phase_grid(xs: CrossSectionField, kernel: ScatterKernel) -> PhaseGrid:
    xb = np.array([-np.inf] + xs.breakpoints("x") + [np.inf])
    om = _refine(kernel.omega_edges, xs.breakpoints("omega"))
    en = None
    if kernel.has_energy:
        en = _refine(kernel.energy_edges, xs.breakpoints("energy"))
    n_om = om.size - 1
    ne = 1 if en is None else en.size - 1
    nc = n_om * ne
    bounds = np.zeros((nc, 4))
    kb = np.zeros(nc, dtype=np.int64)
    for i in range(n_om):
        for k in range(ne):
            c = i * ne + k
            e_lo, e_hi = (0.0, 0.0) if en is None else (en[k], en[k + 1])
            bounds[c] = (om[i], om[i + 1], e_lo, e_hi)
            kb[c] = kernel.bin_index(
                0.5 * (om[i] + om[i + 1]), None if en is None else 0.5 * (e_lo + e_hi)
            )
    widths = bounds[:, 1] - bounds[:, 0]
    if en is not None:
        widths = widths * (bounds[:, 3] - bounds[:, 2])
    nx = xb.size - 1
    sa = np.zeros((nx, nc))
    ss = np.zeros((nx, nc))
    for ix in range(nx):
        xm = _x_mid(xb[ix], xb[ix + 1])
        for c in range(nc):
            s = _cell_mid_state(xm, bounds[c], en is not None)
            sa[ix, c], ss[ix, c] = xs._lookup(s)
    return PhaseGrid(xb, om, en, sa, ss, kb, widths, bounds)


def _cell_mid_state(x, b, has_energy):
    return PhaseState(x, 0.5 * (b[0] + b[1]), 0.5 * (b[2] + b[3]) if has_energy else None)


def _sigma_s_cells_at(xs, grid, x):
    """Pointwise Sigma_s on every fine cell at position ``x`` (closed semantics)."""
    has_e = grid.energy_breaks is not None
    return np.array([xs.sigma_s(_cell_mid_state(x, b, has_e)) for b in grid.bounds])


def forward_masses(kernel: ScatterKernel, grid: PhaseGrid):
    """Outcome masses over kernel bins for every fine conditioning cell: ``[nc, nb]``."""
    return kernel.table[grid.kernel_bin]


def _adjoint_row(kernel, grid, sig_s, b):
    """(S, q-masses over fine cells) for conditioning kernel bin ``b``.

    ``sig_s`` holds Sigma_s on each fine cell at one position.
    """
    wb = kernel.bin_widths()[b]
    if kernel.kind == "uniform-isotropic" and np.all(sig_s == sig_s[0]):
        # closed form: the kernel averages a constant, q reproduces p bitwise
        masses = grid.widths / grid.widths.sum() if grid.n_cells > 1 else np.ones(1)
        return float(sig_s[0]), masses
    contrib = sig_s * kernel.table[grid.kernel_bin, b] / wb * grid.widths
    S = float(contrib.sum())
    if S <= 0:
        return 0.0, np.zeros_like(contrib)
    return S, contrib / S


def adjoint_scatter_rate(xs: CrossSectionField, p: ScatterKernel, s: PhaseState) -> float:
    """S(s) = integral of Sigma_s(x, w') p(s.omega, s.E | w') over outcomes w'."""
    grid = build_phase_grid(xs, p)
    S, _ = _adjoint_row(p, grid, _sigma_s_cells_at(xs, grid, s.x), p.bin_index(s.omega, s.energy))
    return S


@dataclass(frozen=True, eq=False)
class AdjointKernel:
    """Adjoint scattering rate S and conditional density q with S q = Sigma_s p."""

    xs: CrossSectionField
    p: ScatterKernel
    grid: PhaseGrid
    rate_table: np.ndarray  # [nx, nc]
    mass_table: np.ndarray  # [nx, nc, nc]

    def rate(self, s: PhaseState) -> float:
        S, _ = self._row(s)
        return S

    def _row(self, s):
        sig = _sigma_s_cells_at(self.xs, self.grid, s.x)
        return _adjoint_row(self.p, self.grid, sig, self.p.bin_index(s.omega, s.energy))

    def masses(self, cond: PhaseState) -> np.ndarray:
        """q over fine outcome cells; raises DegenerateKernelError where S = 0."""
        S, m = self._row(cond)
        if S <= 0:
            raise DegenerateKernelError(f"adjoint rate vanishes at {cond}")
        return m

    def density(self, out: PhaseState, cond: PhaseState) -> float:
        m = self.masses(cond)
        c = self.grid.cell_index(out.omega, out.energy)
        return m[c] / self.grid.widths[c]

    def sample(self, cond: PhaseState, stream) -> PhaseState:
        m = self.masses(cond)
        u1, u2, u3 = stream.uniform(), stream.uniform(), stream.uniform()
        c = pick_bin(normalized_cdf(m), u1)
        mlo, mhi, elo, ehi = self.grid.bounds[c]
        en = elo + u3 * (ehi - elo) if self.p.has_energy else None
        return PhaseState(cond.x, mlo + u2 * (mhi - mlo), en)


def build_adjoint_kernel(xs: CrossSectionField, p: ScatterKernel) -> AdjointKernel:
    grid = build_phase_grid(xs, p)
    nx, nc = grid.nx, grid.n_cells
    rate = np.zeros((nx, nc))
    masses = np.zeros((nx, nc, nc))
    for ix in range(nx):
        for c in range(nc):
            S, m = _adjoint_row(p, grid, grid.sigma_s[ix], grid.kernel_bin[c])
            rate[ix, c] = S
            masses[ix, c] = m
    return AdjointKernel(xs, p, grid, rate, masses)


def detector_dimensions_match(domain: Domain, *regions: RegionDensity):
    for r in regions:
        if r.rect.has_energy != domain.has_energy:
            raise ConfigurationError("region and domain disagree on energy dimension")


# -- meshes -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Mesh:
    """Tensor mesh over (x, omega); cells are closed, interior edges go up."""

    x_edges: np.ndarray
    omega_edges: np.ndarray

    def __post_init__(self):
        for name in ("x_edges", "omega_edges"):
            e = np.asarray(getattr(self, name), dtype=np.float64)
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ConfigurationError(f"{name} must be strictly increasing with >= 2 entries")
            object.__setattr__(self, name, e)

    @property
    def shape(self):
        return self.x_edges.size - 1, self.omega_edges.size - 1

    @property
    def n_cells(self):
        nx, nm = self.shape
        return nx * nm

    @property
    def x_centers(self):
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1])

    @property
    def omega_centers(self):
        return 0.5 * (self.omega_edges[1:] + self.omega_edges[:-1])

    @property
    def cell_measure(self):
        return np.outer(np.diff(self.x_edges), np.diff(self.omega_edges))

    def locate(self, x, omega):
        """Flat cell index for each point, -1 outside the closed mesh."""
        x = np.asarray(x, dtype=np.float64)
        omega = np.asarray(omega, dtype=np.float64)
        nx, nm = self.shape
        ix = np.clip(np.searchsorted(self.x_edges, x, "right") - 1, 0, nx - 1)
        im = np.clip(np.searchsorted(self.omega_edges, omega, "right") - 1, 0, nm - 1)
        inside = (
            (x >= self.x_edges[0]) & (x <= self.x_edges[-1])
            & (omega >= self.omega_edges[0]) & (omega <= self.omega_edges[-1])
        )
        return np.where(inside, ix * nm + im, -1)

    def same_as(self, other: "Mesh", tol=1e-12) -> bool:
        return (
            self.x_edges.shape == other.x_edges.shape
            and self.omega_edges.shape == other.omega_edges.shape
            and np.allclose(self.x_edges, other.x_edges, rtol=0, atol=tol)
            and np.allclose(self.omega_edges, other.omega_edges, rtol=0, atol=tol)
        )

    def to_dict(self):
        return {"x_edges": self.x_edges.tolist(), "omega_edges": self.omega_edges.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["x_edges"]), np.array(d["omega_edges"]))


MESH_CONVENTIONS = ("centers", "x-nodes")


def _lattice_select(lo, step, a, b, n_max, nodes):
    """Lattice indices k whose point (node or cell center) lies in [a, b]."""
    tol = 1e-9 * step
    off = 0.0 if nodes else 0.5
    k = np.arange(n_max + (1 if nodes else 0))
    pts = lo + (k + off) * step
    return k[(pts >= a - tol) & (pts <= b + tol)]


def region_mesh(rect: Rect, domain: Domain, ds: float, da: float, convention="centers") -> Mesh:
    """Seeding/tally mesh covering ``rect`` on the lattice anchored at the domain corner.

    ``centers``: cells of the domain lattice whose centers lie in ``rect``.
    ``x-nodes``: cells centered on the x-lattice nodes inside ``rect``
    (omega still uses cell centers).
    """
    if ds <= 0 or da <= 0:
        raise ConfigurationError("mesh spacings must be positive")
    if convention not in MESH_CONVENTIONS:
        raise ConfigurationError(f"unknown mesh convention {convention!r}")
    xlo, xhi = domain.x_bounds
    mlo, mhi = domain.omega_bounds
    nxd = int(round((xhi - xlo) / ds))
    nmd = int(round((mhi - mlo) / da))
    kx = _lattice_select(xlo, ds, rect.x[0], rect.x[1], nxd, convention == "x-nodes")
    km = _lattice_select(mlo, da, rect.omega[0], rect.omega[1], nmd, False)
    if kx.size == 0 or km.size == 0:
        raise ConfigurationError(f"no mesh cells inside the support {rect}")
    if np.any(np.diff(kx) != 1) or np.any(np.diff(km) != 1):
        raise ConfigurationError("support does not select a contiguous block of cells")
    if convention == "x-nodes":
        x_edges = xlo + (np.arange(kx[0], kx[-1] + 2) - 0.5) * ds
    else:
        x_edges = xlo + np.arange(kx[0], kx[-1] + 2) * ds
    m_edges = mlo + np.arange(km[0], km[-1] + 2) * da
    return Mesh(x_edges, m_edges)
