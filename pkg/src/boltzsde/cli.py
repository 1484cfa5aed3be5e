"""Command line entry point (``boltzsde``).

Exit codes: 0 success, 2 invalid input, 3 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PRESETS, ConfigValidationError, load_config, preset
from .phase_domain import MESH_CONVENTIONS, ConfigurationError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def _add_run_opts(p):
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    p.add_argument("--workers", type=int, default=1, help="worker threads for transport")


def build_parser():
    ap = argparse.ArgumentParser(prog="boltzsde", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config or a manifest")
    p.add_argument("config")
    _add_run_opts(p)

    p = sub.add_parser("preset", help="run a built-in experiment")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--mode", choices=("forward", "adjoint", "both", "oracle"), default="both")
    p.add_argument("--seed", type=int)
    p.add_argument("--particles-per-cell-forward", type=int, default=61)
    p.add_argument("--particles-per-cell-adjoint", type=int, default=147)
    p.add_argument("--exact-events", action="store_true")
    p.add_argument("--mesh-convention", choices=MESH_CONVENTIONS, default="centers")
    p.add_argument("--dump-config", action="store_true", help="print the config and exit")
    _add_run_opts(p)

    p = sub.add_parser("oracle", help="deterministic solve for a config")
    p.add_argument("config")
    _add_run_opts(p)

    p = sub.add_parser("diff", help="norm of the difference of two grid CSV files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--norm", choices=("l2", "l2-area-weighted", "linf"), default="l2")
    return ap


def _run(cfg, args, manifest_src=None):
    from .experiment import run_experiment, verify_manifest

    bundle = run_experiment(cfg, args.out, workers=args.workers)
    for k, v in bundle.summary.items():
        print(f"{k} = {v}")
    print(f"outputs written to {bundle.out_dir}")
    if manifest_src is not None:
        checks = verify_manifest(manifest_src, bundle.out_dir)
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            print("outputs differ from manifest: " + ", ".join(bad), file=sys.stderr)
            return EXIT_RUNTIME
        print("outputs match the manifest")
    return EXIT_OK


def _is_manifest(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError):
        return False
    return isinstance(doc, dict) and "config" in doc and "outputs" in doc


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "diff":
            from .tally import MeshMismatchError, TallyGrid, grid_norm_diff

            try:
                a, b = TallyGrid.from_csv(args.a), TallyGrid.from_csv(args.b)
                print(repr(grid_norm_diff(a, b, args.norm)))
            except (OSError, ValueError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_INVALID
            return EXIT_OK
        if args.command == "preset":
            cfg = preset(
                args.name, mode=args.mode, seed=args.seed,
                particles={"forward_per_cell": args.particles_per_cell_forward,
                           "adjoint_per_cell": args.particles_per_cell_adjoint},
                estimators={"exact_events": args.exact_events},
                mesh={"convention": args.mesh_convention},
            )
            if args.dump_config:
                print(json.dumps(cfg.model_dump(mode="json"), indent=2))
                return EXIT_OK
            return _run(cfg, args)
        cfg = load_config(args.config)
        if args.command == "oracle":
            cfg = cfg.model_copy(update={"mode": "oracle"})
            return _run(cfg, args)
        manifest = args.config if _is_manifest(args.config) else None
        return _run(cfg, args, manifest)
    except ConfigValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigurationError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        logging.getLogger("boltzsde").debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
