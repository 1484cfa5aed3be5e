"""Time the compiled and numpy transport engines on the slab experiment.

    python3 benchmarks/bench_backends.py [--per-cell 61] [--repeat 3]

Both engines consume the same random streams, so the script also checks
that they produce the same response.
"""

import argparse
import time

import numpy as np

from boltzsde import _backend
from boltzsde.config import preset
from boltzsde.oracle import SnGrid, solve_forward_deterministic
from boltzsde.phase_domain import region_mesh
from boltzsde.transport import SimulationParams, StartBank, forward_problem, run_ensemble, seed_on_mesh


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-cell", type=int, default=61)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = preset()
    dom, xs, k = cfg.build_domain(), cfg.build_cross_sections(), cfg.build_kernel()
    f, g = cfg.build_source(), cfg.build_detector()
    bank = seed_on_mesh(f, region_mesh(f.rect, dom, 0.01, 0.01), args.per_cell)
    mesh = region_mesh(g.rect, dom, 0.01, 0.01)
    prob = forward_problem(dom, xs, k)
    params = SimulationParams(cfg.dt, cfg.v)
    engines = ["numpy"] + (["numba"] if _backend.USE_NUMBA else [])

    print(f"{len(bank)} forward histories, best of {args.repeat}")
    resp = {}
    for name in engines:
        run = lambda: run_ensemble(prob, bank, params, cfg.seed, score=[g], mesh=mesh,
                                   workers=args.workers, backend=name)
        if name == "numba":
            run_ensemble(prob, StartBank.repeat(bank[0], 10), params, 0, score=[g], mesh=mesh, backend=name)  # compile
        t, r = best_of(run, args.repeat)
        resp[name] = r.scores[:, 0].mean()
        print(f"  transport  {name:6s} {t:8.3f} s   {len(bank) / t:12.0f} histories/s   response {resp[name]:.8g}")
    if len(resp) == 2:
        print(f"  responses agree to {abs(resp['numba'] - resp['numpy']) / resp['numba']:.2g} relative")

    grid = SnGrid.uniform((-1.0, 1.0), 2000, 200, "equal-weight")
    for name in engines:
        t, sol = best_of(lambda: solve_forward_deterministic(dom, xs, k, f, grid, backend=name), 1)
        print(f"  sweeps     {name:6s} {t:8.3f} s   {sol.iterations} iterations")


if __name__ == "__main__":
    main()
