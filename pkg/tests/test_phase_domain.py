import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boltzsde.phase_domain import (
    ConfigurationError,
    CrossSectionField,
    CrossSectionOverride,
    DegenerateKernelError,
    Domain,
    Mesh,
    PhaseState,
    Rect,
    RegionDensity,
    ScatterKernel,
    adjoint_scatter_rate,
    build_adjoint_kernel,
    density_eval,
    region_contains,
    region_mesh,
)
from boltzsde.rng import ParticleStream
from boltzsde.transport import seed_detector_ensemble, seed_source_ensemble

R1 = RegionDensity.indicator(Rect((0.29, 0.69), (-1.0, 1.0)))
R2 = RegionDensity.indicator(Rect((-0.22, -0.06), (-1.0, 1.0)))
DOMAIN = Domain((-1.0, 1.0), (-1.0, 1.0))


def two_bin_kernel():
    return ScatterKernel.tabulated([-1.0, 0.0, 1.0], [[0.5, 0.5], [0.5, 0.5]])


def two_bin_xs():
    # sigma_s = 1 on omega in [-1, 0), 3 on [0, 1]
    return CrossSectionField(0.0, 1.0, [CrossSectionOverride(Rect((-1.0, 1.0), (0.0, 1.0)), 0.0, 3.0)])


# -- membership and densities


def test_region_membership_examples():
    assert region_contains(R1, PhaseState(0.5, 0.0))
    assert not region_contains(R1, PhaseState(-0.1, 0.5))
    assert region_contains(R1, PhaseState(0.69, 1.0))


def test_membership_rejects_dimension_mismatch():
    with_energy = RegionDensity.indicator(Rect((0.0, 1.0), (-1.0, 1.0), (0.0, 2.0)))
    with pytest.raises(ConfigurationError):
        region_contains(with_energy, PhaseState(0.5, 0.0))


def test_normalized_density_value():
    # 1/measure with measure 0.4 * 2
    assert density_eval(R1, PhaseState(0.5, 0.0)) == pytest.approx(1.25, abs=1e-15)
    assert density_eval(R1, PhaseState(0.9, 0.0)) == 0.0


def test_normalized_density_integrates_to_one_by_midpoint_rule():
    h = 0.001
    xs = -1.0 + (np.arange(2000) + 0.5) * h
    ms = -1.0 + (np.arange(2000) + 0.5) * h
    inside_x = (xs >= 0.29) & (xs <= 0.69)
    inside_m = (ms >= -1) & (ms <= 1)
    total = R1.value * inside_x.sum() * inside_m.sum() * h * h
    assert total == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_midpoint_integral_error_shrinks_with_refinement(n):
    d = RegionDensity.indicator(Rect((0.123, 0.777)))
    h = 2.0 / n
    c = -1.0 + (np.arange(n) + 0.5) * h
    total = d.value * ((c >= 0.123) & (c <= 0.777)).sum() * h * 2.0
    assert abs(total - 1.0) <= 2 * h / 0.654


def test_zero_measure_normalized_density_is_rejected():
    with pytest.raises(ConfigurationError):
        RegionDensity.indicator(Rect((0.3, 0.3)))


def test_phase_state_rejects_bad_cosine():
    with pytest.raises(ValueError):
        PhaseState(0.0, 1.5)


# -- cross sections


def test_last_override_wins():
    xs = CrossSectionField(1.0, 2.0, [
        CrossSectionOverride(Rect((0.0, 1.0)), 3.0, 4.0),
        CrossSectionOverride(Rect((0.5, 1.0)), 5.0, 6.0),
    ])
    assert (xs.sigma_a(PhaseState(0.2, 0.0)), xs.sigma_s(PhaseState(0.2, 0.0))) == (3.0, 4.0)
    assert (xs.sigma_a(PhaseState(0.7, 0.0)), xs.sigma_s(PhaseState(0.7, 0.0))) == (5.0, 6.0)
    assert xs.sigma_t(PhaseState(-0.5, 0.0)) == 3.0


def test_negative_cross_sections_are_rejected():
    with pytest.raises(ConfigurationError):
        CrossSectionField(-1.0, 0.0)


# -- adjoint rate and kernel


def test_uniform_kernel_constant_sigma_s_gives_identical_tables():
    k = ScatterKernel.uniform()
    xs = CrossSectionField(5.0, 2.5)
    adj = build_adjoint_kernel(xs, k)
    assert np.all(adj.rate_table == 2.5)
    assert adjoint_scatter_rate(xs, k, PhaseState(0.1, -0.3)) == 2.5
    q = adj.masses(PhaseState(0.1, -0.3))
    assert np.array_equal(q, k.probabilities(PhaseState(0.1, -0.3)))
    assert adj.density(PhaseState(0.2, 0.9), PhaseState(0.1, -0.3)) == k.density(
        PhaseState(0.2, 0.9), PhaseState(0.1, -0.3))


def test_zero_scattering_gives_zero_rate_and_degenerate_kernel():
    xs = CrossSectionField(1.0, 0.0)
    adj = build_adjoint_kernel(xs, ScatterKernel.uniform())
    assert adj.rate(PhaseState(0.0, 0.5)) == 0.0
    assert np.all(adj.rate_table == 0.0)
    with pytest.raises(DegenerateKernelError):
        adj.masses(PhaseState(0.0, 0.5))


def test_two_bin_rate_and_kernel():
    k, xs = two_bin_kernel(), two_bin_xs()
    for om in (-0.5, 0.5):
        assert adjoint_scatter_rate(xs, k, PhaseState(0.0, om)) == pytest.approx(2.0, abs=1e-14)
    adj = build_adjoint_kernel(xs, k)
    q = adj.masses(PhaseState(0.0, -0.5))
    assert abs(q[0] - 0.25) <= 1e-12 and abs(q[1] - 0.75) <= 1e-12


def test_state_independent_kernel_with_constant_sigma_s_is_not_self_adjoint_in_general():
    # p(.|.) = fixed non-uniform law: S = Sigma_s * W * p(omega) and q is uniform.
    k = ScatterKernel.tabulated([-1.0, 0.0, 1.0], [[0.2, 0.8], [0.2, 0.8]])
    adj = build_adjoint_kernel(CrossSectionField(0.0, 2.0), k)
    s_lo = adj.rate(PhaseState(0.0, -0.5))
    s_hi = adj.rate(PhaseState(0.0, 0.5))
    assert s_lo == pytest.approx(2.0 * 2.0 * 0.2)
    assert s_hi == pytest.approx(2.0 * 2.0 * 0.8)
    assert np.allclose(adj.masses(PhaseState(0.0, -0.5)), [0.5, 0.5], atol=1e-14)


@st.composite
def tabulated_problems(draw):
    n = draw(st.integers(1, 5))
    cuts = sorted(draw(st.lists(st.floats(-0.95, 0.95), min_size=n - 1, max_size=n - 1, unique=True)))
    edges = [-1.0] + cuts + [1.0]
    if np.any(np.diff(edges) < 1e-3):
        edges = list(np.linspace(-1, 1, n + 1))
    rows = np.array(draw(st.lists(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
                                  min_size=n, max_size=n)))
    table = rows / rows.sum(axis=1, keepdims=True)
    kernel = ScatterKernel.tabulated(edges, table)
    nov = draw(st.integers(0, 3))
    ov = []
    for _ in range(nov):
        x0 = draw(st.floats(-1, 0.9))
        m0 = draw(st.floats(-1, 0.9))
        ov.append(CrossSectionOverride(
            Rect((x0, x0 + draw(st.floats(0.05, 1.0))), (m0, min(1.0, m0 + draw(st.floats(0.05, 1.0))))),
            draw(st.floats(0, 5)), draw(st.floats(0.1, 5))))
    xs = CrossSectionField(draw(st.floats(0, 5)), draw(st.floats(0.1, 5)), ov)
    return xs, kernel


@given(tabulated_problems())
def test_adjoint_kernel_balance_and_normalization(problem):
    xs, k = problem
    adj = build_adjoint_kernel(xs, k)
    g = adj.grid
    for ix in range(g.nx):
        sig = g.sigma_s[ix]
        for c in range(g.n_cells):
            S = adj.rate_table[ix, c]
            q = adj.mass_table[ix, c]
            if S > 0:
                assert abs(q.sum() - 1.0) <= 1e-10
            # S q(c'|c) w-masses against Sigma_s(c') p(c|c'): compare as densities per unit omega
            for c2 in range(g.n_cells):
                lhs = S * q[c2] / g.widths[c2]
                rhs = sig[c2] * k.table[g.kernel_bin[c2], g.kernel_bin[c]] / k.bin_widths()[g.kernel_bin[c]]
                assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


# -- scattering kernel sampling


def test_kernel_rows_sum_to_one_and_bad_tables_rejected():
    k = two_bin_kernel()
    assert abs(k.probabilities(PhaseState(0.0, 0.3)).sum() - 1.0) <= 1e-12
    with pytest.raises(ConfigurationError):
        ScatterKernel.tabulated([-1.0, 0.0, 1.0], [[0.5, 0.6], [0.5, 0.5]])


def test_kernel_sampling_matches_evaluated_probabilities():
    from boltzsde.phase_domain import normalized_cdf
    from boltzsde.rng import stream_keys
    from boltzsde.transport._vectorized import _sample

    k = ScatterKernel.tabulated([-1.0, -0.5, 0.2, 1.0], [[0.1, 0.3, 0.6], [0.5, 0.25, 0.25], [1 / 3, 1 / 3, 1 / 3]])
    n = 10 ** 6
    keys = stream_keys(3, 1, np.arange(n))
    cond = k.bin_index(-0.7)
    cdf = np.broadcast_to(normalized_cdf(k.table)[cond], (n, 3))
    mu, _ = _sample(cdf, k.bin_bounds(), False, keys, np.zeros(n, dtype=np.int64))
    counts = np.histogram(mu, bins=k.omega_edges)[0]
    p = k.probabilities(PhaseState(0.0, -0.7))
    se = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 5 * se)
    # the scalar sampler uses the same draws
    s = ParticleStream(3, index=17)
    out = k.sample(PhaseState(0.0, -0.7), s)
    assert out.omega == mu[17] and s.counter == 3


# -- meshes and seeding


def test_seeding_sixty_one_per_cell_center():
    bank = seed_source_ensemble(R1, DOMAIN, (0.01, 0.01), 61)
    assert len(bank) == 40 * 200 * 61 == 488_000
    assert np.all(np.bincount(bank.cell) == 61)
    assert np.allclose(np.unique(bank.x), 0.295 + 0.01 * np.arange(40))


def test_node_convention_counts():
    f = seed_source_ensemble(R1, DOMAIN, (0.01, 0.01), 61, convention="x-nodes")
    g = seed_detector_ensemble(R2, DOMAIN, (0.01, 0.01), 147, convention="x-nodes")
    assert len(f) == 500_200
    assert len(g) == 499_800
    assert np.all(np.bincount(g.cell) == 147)


def test_detector_seeding_counts():
    g = seed_detector_ensemble(R2, DOMAIN, (0.01, 0.01), 147)
    assert len(g) == 16 * 200 * 147
    assert np.all(np.bincount(g.cell) == 147)


def test_single_cell_single_particle():
    d = RegionDensity.indicator(Rect((0.0, 0.01), (0.0, 0.01)))
    bank = seed_source_ensemble(d, DOMAIN, (0.01, 0.01), 1)
    assert len(bank) == 1
    assert bank[0].x == pytest.approx(0.005) and bank[0].omega == pytest.approx(0.005)


def test_empty_support_is_rejected():
    d = RegionDensity.indicator(Rect((0.001, 0.004)))
    with pytest.raises(ConfigurationError):
        seed_source_ensemble(d, DOMAIN, (0.01, 0.01), 5)


def test_mesh_locate_is_closed_and_edges_go_up():
    m = Mesh(np.array([0.0, 0.5, 1.0]), np.array([-1.0, 0.0, 1.0]))
    assert m.locate(0.5, 0.0) == 3
    assert m.locate(1.0, 1.0) == 3
    assert m.locate(0.0, -1.0) == 0
    assert m.locate(1.0000001, 0.0) == -1
    assert math.isclose(m.cell_measure.sum(), 2.0)


@given(st.floats(0.001, 0.2), st.floats(0.001, 0.2))
def test_region_mesh_cells_lie_on_the_domain_lattice(ds, da):
    m = region_mesh(Rect((-0.5, 0.5)), DOMAIN, ds, da)
    kx = (m.x_edges + 1.0) / ds
    assert np.allclose(kx, np.round(kx), atol=1e-6)
    assert np.all(m.x_centers >= -0.5 - 1e-9) and np.all(m.x_centers <= 0.5 + 1e-9)
