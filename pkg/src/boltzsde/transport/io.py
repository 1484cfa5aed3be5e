"""Trajectory ensemble files.

Plain-text CSV, one record per row, written with 17 significant digits so
floats round-trip exactly.  ``#`` lines at the top give ``key=value``
metadata: sense, dt, v, max_steps, absorption_mode, exact_events, seed,
has_energy and the start mesh as JSON (or ``null``).  The column header is

    particle,step,time,x,omega[,energy],depth,flag

``flag`` is 3 for the start record, 0 for a step sample, 1 for a sample
taken right after a scatter (the post-scatter direction), and 10 + k for
the exit record, with k = 0 (left the domain), 1 (absorbed, analog mode)
or 2 (census cap).  Rows of one particle are contiguous and in time order.
"""

from __future__ import annotations

import json

import numpy as np

from ..phase_domain import Mesh
from . import _kernels as K
from .common import SENSE_NAMES, SimulationParams, StartBank, TrajectoryEnsemble

EXIT_FLAG_BASE = 10
_SENSES = {v: k for k, v in SENSE_NAMES.items()}


def write_trajectories(ens: TrajectoryEnsemble, path):
    p = ens.params
    mesh = ens.starts.mesh
    meta = {
        "sense": SENSE_NAMES[ens.sense],
        "dt": repr(float(p.dt)),
        "v": repr(float(p.v)),
        "max_steps": str(int(p.max_steps)),
        "absorption_mode": p.absorption_mode,
        "exact_events": "true" if p.exact_events else "false",
        "seed": str(int(ens.seed)),
        "has_energy": "true" if ens.has_energy else "false",
        "mesh": json.dumps(mesh.to_dict() if mesh is not None else None),
    }
    flag = ens.flag.copy()
    ex = ens.exit_rows
    flag[ex] = EXIT_FLAG_BASE + ens.exit_kind
    cols = ["particle", "step", "time", "x", "omega"] + (["energy"] if ens.has_energy else []) + ["depth", "flag"]
    with open(path, "w", newline="\n") as fh:
        fh.write("# boltzsde trajectory ensemble v1\n")
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        fh.write(",".join(cols) + "\n")
        part = ens.particle
        for i in range(ens.x.size):
            vals = [str(int(part[i])), str(int(ens.step[i])), repr(float(ens.time[i])),
                    repr(float(ens.x[i])), repr(float(ens.omega[i]))]
            if ens.has_energy:
                vals.append(repr(float(ens.energy[i])))
            vals += [repr(float(ens.depth[i])), str(int(flag[i]))]
            fh.write(",".join(vals) + "\n")


def read_trajectories(path) -> TrajectoryEnsemble:
    meta = {}
    with open(path) as fh:
        head = fh.readline()
        if not head.startswith("# boltzsde trajectory ensemble"):
            raise ValueError(f"{path}: not a trajectory ensemble file")
        line = fh.readline()
        while line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
            line = fh.readline()
        cols = line.strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    c = {name: data[:, i] for i, name in enumerate(cols)}
    has_e = meta["has_energy"] == "true"
    params = SimulationParams(float(meta["dt"]), float(meta["v"]), int(meta["max_steps"]),
                              meta["absorption_mode"], meta["exact_events"] == "true")
    particle = c["particle"].astype(np.int64)
    n = int(particle[-1]) + 1 if particle.size else 0
    counts = np.bincount(particle, minlength=n)
    row_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    flag = c["flag"].astype(np.int64)
    exit_rows = row_start[1:] - 1
    exit_kind = flag[exit_rows] - EXIT_FLAG_BASE
    flag[exit_rows] = K.FLAG_EXIT
    energy = c["energy"] if has_e else np.zeros(particle.size)
    mesh_d = json.loads(meta["mesh"])
    first = row_start[:-1]
    sx, so = c["x"][first], c["omega"][first]
    if mesh_d is not None:
        mesh = Mesh.from_dict(mesh_d)
        cell = mesh.locate(sx, so).astype(np.int64)
    else:
        mesh = None
        cell = np.zeros(n, dtype=np.int64)
    starts = StartBank(sx, so, energy[first] if has_e else None, cell, mesh, 0)
    return TrajectoryEnsemble(
        _SENSES[meta["sense"]], params, int(meta["seed"]), starts, has_e, row_start,
        c["step"].astype(np.int64), c["time"], c["x"], c["omega"], energy, c["depth"], flag, exit_kind,
    )
