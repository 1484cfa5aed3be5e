"""Run a configured experiment and write its grids, summary and manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from . import __version__, _backend
from .config import ExperimentConfig, load_config
from .oracle import SnGrid, solve_adjoint_deterministic, solve_forward_deterministic
from .phase_domain import region_mesh
from .tally import (
    NORMS,
    BoundaryFunction,
    TallyGrid,
    adjoint_flux_from_forward,
    adjoint_flux_tally,
    all_norms,
    flux_from_adjoint,
    forward_flux_tally,
    inner_product,
    response_from_adjoint,
    response_from_forward,
)
from .transport import (
    SimulationParams,
    adjoint_problem,
    forward_problem,
    run_ensemble,
    seed_on_mesh,
)
from .transport.io import write_trajectories

logger = logging.getLogger(__name__)

GRID_NAMES = {
    "forward_flux_tally": "flux on the detector mesh, forward track tally",
    "adjoint_flux_from_forward": "adjoint flux on the source mesh, reused forward histories",
    "adjoint_flux_tally": "adjoint flux on the source mesh, adjoint track tally",
    "flux_from_adjoint": "flux on the detector mesh, reused adjoint histories",
    "sn_forward_flux": "flux on the detector mesh, discrete ordinates",
    "sn_adjoint_flux": "adjoint flux on the source mesh, discrete ordinates",
}


@dataclass
class ArtifactBundle:
    out_dir: Path
    grids: Dict[str, TallyGrid] = field(default_factory=dict)
    summary: Dict[str, object] = field(default_factory=dict)
    manifest: Dict[str, object] = field(default_factory=dict)
    files: Dict[str, Path] = field(default_factory=dict)


def _per_cell(per_cell, total, mesh):
    if per_cell is not None:
        return per_cell
    return max(1, total // mesh.n_cells)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fmt(v):
    if isinstance(v, float):
        return "nan" if not math.isfinite(v) else repr(v)
    return str(v)


def run_experiment(config, out_dir=None, workers: int = 1) -> ArtifactBundle:
    """Execute ``config`` and write every artifact into ``out_dir``.

    Everything but ``run_info.json`` (wall time, workers, backend) is a pure
    function of the config, so repeated runs produce byte-identical files.
    """
    cfg = load_config(config)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    domain = cfg.build_domain()
    xs = cfg.build_cross_sections()
    kernel = cfg.build_kernel()
    f = cfg.build_source()
    g = cfg.build_detector()
    m = cfg.mesh
    f_mesh = region_mesh(f.rect, domain, m.ds, m.da, m.convention)
    g_mesh = region_mesh(g.rect, domain, m.ds, m.da, m.convention)
    est = cfg.estimators
    params = SimulationParams(cfg.dt, cfg.v, cfg.max_steps, est.absorption_mode, est.exact_events)
    analog = params.analog
    bundle = ArtifactBundle(out)
    S = bundle.summary
    counts = {}
    census = {}
    S["mode"] = cfg.mode
    S["seed"] = cfg.seed

    fwd = adj = None
    if cfg.mode in ("forward", "both"):
        n = _per_cell(cfg.particles.forward_per_cell, cfg.particles.forward_total, f_mesh)
        bank = seed_on_mesh(f, f_mesh, n)
        fwd = run_ensemble(forward_problem(domain, xs, kernel), bank, params, cfg.seed,
                           score=[g], mesh=g_mesh, workers=workers, record=est.record_trajectories)
        counts["forward"] = len(bank)
        census["forward"] = fwd.n_census
        S["forward_particles"] = len(bank)
        S["forward_particles_per_cell"] = n
        bnd = BoundaryFunction(est.boundary_forward)
        S["response_forward"], S["response_forward_se"] = response_from_forward(
            fwd, g, bnd, allow_analog=analog)
        bundle.grids["forward_flux_tally"] = forward_flux_tally(fwd, allow_analog=analog)
        bundle.grids["adjoint_flux_from_forward"] = adjoint_flux_from_forward(fwd, g, bnd, allow_analog=analog)
        S["inner_adjoint_flux_from_forward_f"] = inner_product(bundle.grids["adjoint_flux_from_forward"], f)
        if est.record_trajectories:
            write_trajectories(fwd.trajectories, out / "trajectories_forward.csv")
            bundle.files["trajectories_forward"] = out / "trajectories_forward.csv"
    if cfg.mode in ("adjoint", "both"):
        n = _per_cell(cfg.particles.adjoint_per_cell, cfg.particles.adjoint_total, g_mesh)
        bank = seed_on_mesh(g, g_mesh, n)
        adj = run_ensemble(adjoint_problem(domain, xs, kernel), bank, params, cfg.seed,
                           score=[f], mesh=f_mesh, workers=workers, record=est.record_trajectories)
        counts["adjoint"] = len(bank)
        census["adjoint"] = adj.n_census
        S["adjoint_particles"] = len(bank)
        S["adjoint_particles_per_cell"] = n
        bnd = BoundaryFunction(est.boundary_adjoint)
        S["response_adjoint"], S["response_adjoint_se"] = response_from_adjoint(
            adj, f, bnd, allow_analog=analog)
        bundle.grids["adjoint_flux_tally"] = adjoint_flux_tally(adj, allow_analog=analog)
        bundle.grids["flux_from_adjoint"] = flux_from_adjoint(adj, f, bnd, allow_analog=analog)
        S["inner_flux_from_adjoint_g"] = inner_product(bundle.grids["flux_from_adjoint"], g)
        if est.record_trajectories:
            write_trajectories(adj.trajectories, out / "trajectories_adjoint.csv")
            bundle.files["trajectories_adjoint"] = out / "trajectories_adjoint.csv"
    if cfg.mode == "both":
        gap = S["response_forward"] - S["response_adjoint"]
        se = math.hypot(S["response_forward_se"], S["response_adjoint_se"])
        S["duality_gap"] = gap
        S["duality_gap_se"] = se
        S["duality_gap_z"] = gap / se if se > 0 else math.nan
        for label, a, b in (("adjoint_pair", "adjoint_flux_from_forward", "adjoint_flux_tally"),
                            ("forward_pair", "flux_from_adjoint", "forward_flux_tally")):
            for norm, val in all_norms(bundle.grids[a], bundle.grids[b]).items():
                S[f"norm_{label}_{norm}"] = val
    if cfg.mode == "oracle":
        o = cfg.oracle
        sn = SnGrid.uniform(domain.x_bounds, o.n_cells, o.n_ordinates, o.quadrature)
        F = solve_forward_deterministic(domain, xs, kernel, f, sn, o.tol, o.max_iter)
        A = solve_adjoint_deterministic(domain, xs, kernel, g, sn, o.tol, o.max_iter)
        bundle.grids["sn_forward_flux"] = F.to_tally_grid(g_mesh)
        bundle.grids["sn_adjoint_flux"] = A.to_tally_grid(f_mesh)
        S["sn_response_forward"] = F.inner(g)
        S["sn_response_adjoint"] = A.inner(f)
        S["sn_duality_rel_gap"] = abs(S["sn_response_forward"] - S["sn_response_adjoint"]) / max(
            abs(S["sn_response_forward"]), 1e-300)
        S["sn_iterations_forward"] = F.iterations
        S["sn_iterations_adjoint"] = A.iterations
        S["sn_spectral_radius_forward"] = F.spectral_radius
        S["sn_spectral_radius_adjoint"] = A.spectral_radius
        S["sn_negative_flux"] = str(F.negative or A.negative).lower()

    empty = {}
    for name, grid in bundle.grids.items():
        csv = out / f"{name}.csv"
        pgm = out / f"{name}.pgm"
        grid.to_csv(csv)
        grid.to_pgm(pgm)
        bundle.files[name] = csv
        bundle.files[name + "_pgm"] = pgm
        empty[name] = grid.n_empty
        S[f"empty_cells_{name}"] = grid.n_empty
    for k, v in census.items():
        S[f"census_capped_{k}"] = v

    summary_path = out / "summary.txt"
    with open(summary_path, "w", newline="\n") as fh:
        for k, v in S.items():
            fh.write(f"{k} = {_fmt(v)}\n")
    bundle.files["summary"] = summary_path

    bundle.manifest = {
        "config": cfg.model_dump(mode="json"),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": {"boltzsde": __version__, "numpy": np.__version__},
        "particle_counts": counts,
        "census_capped": census,
        "empty_cells": empty,
        "outputs": {p.name: sha256_file(p) for p in sorted(bundle.files.values())},
    }
    with open(out / "manifest.json", "w", newline="\n") as fh:
        json.dump(bundle.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    wall = time.perf_counter() - t0
    info = {
        "wall_time_s": wall,
        "workers": workers,
        "backend": _backend.backend_name(),
        "python": sys.version.split()[0],
        "platform": platform.platform(),
    }
    if _backend.USE_NUMBA:
        import numba

        info["numba"] = numba.__version__
    with open(out / "run_info.json", "w") as fh:
        json.dump(info, fh, indent=2)
        fh.write("\n")
    logger.info("experiment finished in %.1f s, outputs in %s", wall, out)
    return bundle


def verify_manifest(manifest_path, out_dir) -> Dict[str, bool]:
    """Compare the files in ``out_dir`` against the hashes recorded in a manifest."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    out = Path(out_dir)
    return {name: (out / name).exists() and sha256_file(out / name) == h
            for name, h in manifest["outputs"].items()}
