"""Command-line entry point: ``pcdbound {pcd,mc,bench,bve}``.

Exit codes: 0 on success, 2 for configuration or input errors, 3 for a
numeric failure (the offending row or instance goes to stderr).
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import bench
from .bvh import BVType, build_bvh, bve, translated_tree
from .errors import ConfigError, EmptyMesh, OpenMesh, ParseError, PCDError
from .geometry import GaussianError, covariance_from_sigmas, random_rotation
from .mesh import resolve_mesh
from .query import PcdQuery, general_pcd, monte_carlo_probability

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("pcdbound")


def parse_sigma(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad --sigma value {text!r}") from None
    if len(vals) == 1:
        vals *= 3
    if len(vals) != 3 or any(not v > 0 or not np.isfinite(v) for v in vals):
        raise ConfigError("--sigma needs one or three positive numbers")
    return vals


def _error(args):
    axes = None if args.sigma_axes_seed is None else random_rotation(args.sigma_axes_seed)
    return GaussianError(np.zeros(3), covariance_from_sigmas(parse_sigma(args.sigma), axes))


def _meshes(args):
    a = resolve_mesh(args.mesh_a)
    b = resolve_mesh(args.mesh_b)
    if not args.no_normalize:
        a, b = a.normalized(), b.normalized()
    offset = np.zeros(3)
    if args.distance is not None and not args.distance > 0:
        raise ConfigError("--distance must be positive")
    if args.distance is not None:
        offset = bench.place_at_separation(a, b, args.distance).translation
    return a, b, offset


def _add_pair_args(p):
    p.add_argument("--mesh-a", default="builtin:bunny", help="OBJ path or builtin:<name>")
    p.add_argument("--mesh-b", default="builtin:bunny")
    p.add_argument("--no-normalize", action="store_true",
                   help="keep input scale instead of a unit longest AABB edge")
    p.add_argument("--sigma", default="0.03", help="sx,sy,sz in meters (or one value)")
    p.add_argument("--sigma-axes-seed", type=int, default=None)
    p.add_argument("--distance", type=float, default=None,
                   help="place B along +x at this surface distance (m)")


def cmd_pcd(args):
    a, b, offset = _meshes(args)
    error = _error(args)
    tree_a = build_bvh(a, args.bv, args.leaf_capacity)
    tree_b = translated_tree(build_bvh(b, args.bv, args.leaf_capacity), offset)
    res = general_pcd(PcdQuery(tree_a, tree_b, error, args.delta))
    print(f"cp_upper {res.probability_upper:.6g}")
    print(f"root_bound {res.root_bound:.6g}")
    print(f"nodes_visited {res.nodes_visited}")
    print(f"leaf_pairs {res.leaf_pairs_evaluated}")
    print(f"query_ms {1e3 * res.elapsed:.3f}")
    return EXIT_OK


def cmd_mc(args):
    a, b, offset = _meshes(args)
    res = monte_carlo_probability(a, b.translated(offset), _error(args), args.samples, args.seed)
    print(f"estimate {res.estimate:.6g}")
    print(f"std_error {res.std_error:.6g}")
    print(f"hits {res.hits}/{res.n_samples}")
    return EXIT_OK


def cmd_bve(args):
    mesh = resolve_mesh(args.mesh_a)
    if not args.no_normalize:
        mesh = mesh.normalized()
    kinds = [BVType.parse(args.bv)] if args.bv else list(BVType)
    for kind in kinds:
        tree = build_bvh(mesh, kind, args.leaf_capacity)
        print(f"{kind.value:8} {bve(mesh, tree):.6g}")
    return EXIT_OK


def cmd_bench(args):
    config = bench.BenchmarkConfig.from_json(args.config) if args.config else bench.BenchmarkConfig()
    if args.samples is not None:
        config.mc_samples = args.samples
    if args.delta is not None:
        config.delta = args.delta
    if args.frames is not None:
        config.aabb_frame_count = args.frames
    if args.out is not None:
        config.output = args.out
    if args.no_figures:
        config.figures = False
    config.validate()
    with bench.CsvSink(config.output) as sink:
        records = bench.run_benchmark(config, sink=sink)
    bench.write_timing(records, bench.timing_path(config.output))
    if config.figures:
        from .plotting import write_figures

        for path in write_figures(records, config.output):
            log.info("wrote %s", path)
    if args.format == "table":
        sys.stdout.write(bench.emit(records, "table"))
    else:
        sys.stdout.write(bench.emit(records, "csv"))
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        print(f"failed row: {bench.csv_text([r]).splitlines()[1]}", file=sys.stderr)
    unsound = [r for r in records if r.status == "ok" and not r.sound]
    for r in unsound:
        print(f"unsound row (CP < MC - 3 SE): {bench.csv_text([r]).splitlines()[1]}",
              file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pcdbound",
                                     description="Collision probability bounds for meshes "
                                                 "under Gaussian positional error.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pcd", help="bound for one mesh pair")
    _add_pair_args(p)
    p.add_argument("--bv", default="convex", choices=[t.value for t in BVType])
    p.add_argument("--delta", type=float, default=0.99)
    p.add_argument("--leaf-capacity", type=int, default=4)
    p.set_defaults(func=cmd_pcd)

    p = sub.add_parser("mc", help="Monte Carlo reference estimate")
    _add_pair_args(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("bench", help="run a benchmark matrix")
    p.add_argument("--config", default=None, help="JSON config; defaults apply when omitted")
    p.add_argument("--out", default=None, help="CSV path (overrides the config)")
    p.add_argument("--format", default="table", choices=["csv", "table"])
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--frames", type=int, default=None, help="AABB random frame count")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bve", help="bounding volume approximation error of one mesh")
    p.add_argument("--mesh-a", default="builtin:bunny")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--bv", default=None, choices=[t.value for t in BVType])
    p.add_argument("--leaf-capacity", type=int, default=4)
    p.set_defaults(func=cmd_bve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "leaf_capacity", 1) < 1:
        parser.error("--leaf-capacity must be positive")
    if hasattr(args, "delta") and args.delta is not None and not 0.0 < args.delta < 1.0:
        parser.error("--delta must lie strictly between 0 and 1")
    if getattr(args, "samples", None) is not None and args.samples < 100:
        parser.error("--samples must be at least 100")
    try:
        return args.func(args)
    except (ConfigError, ParseError, EmptyMesh, OpenMesh, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PCDError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
