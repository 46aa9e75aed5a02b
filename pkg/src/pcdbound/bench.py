"""Benchmark harness: mesh placement, the experiment matrix and result output.

One record is produced per ``(distance, bv_type, sigma, seed)``.  AABB rows
are also repeated in ``aabb_frame_count`` random global frames (both meshes
and the covariance rotated together), since an AABB hierarchy depends on
the frame it is built in.  Those sub-rows carry ``frame >= 0``; canonical
rows have ``frame = -1``.

The main CSV holds only deterministic columns, so reruns of one config are
byte-identical.  Wall-clock timings go to a sidecar ``*.timing.csv``.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvh import BVType, build_bvh, bve, exhaustive_pair_count, translated_tree
from .errors import ConfigError, NonConvergence, PCDError
from .geometry import GaussianError, Isometry, covariance_from_sigmas, random_rotation
from .mesh import resolve_mesh
from .query import (
    PcdQuery, TriangleTree, general_pcd, mesh_distance, monte_carlo_probability,
)

log = logging.getLogger(__name__)

PLACEMENT_TOL = 1e-6
PLACEMENT_STEPS = 100
ADVANCE_STEPS = 60


@dataclass
class BenchmarkConfig:
    """Experiment matrix.  Every field has a default; JSON files may override any subset.

    ``sigma_ratios`` scales each entry of ``sigmas`` into three principal
    standard deviations, whose axes come from ``random_rotation(seed)``.
    """

    mesh_a: str = "builtin:bunny"
    mesh_b: str = "builtin:bunny"
    normalize: bool = True
    distances: list = field(default_factory=lambda: [0.01, 0.05])
    sigmas: list = field(default_factory=lambda: [0.01, 0.03, 0.05])
    sigma_ratios: list = field(default_factory=lambda: [1.0, 0.6, 0.3])
    seeds: list = field(default_factory=lambda: list(range(10)))
    bv_types: list = field(default_factory=lambda: [t.value for t in BVType])
    delta: float = 0.99
    leaf_capacity: int = 4
    mc_samples: int = 10_000
    aabb_frame_count: int = 100
    sphere_method: str = "max"
    output: str = "results.csv"
    figures: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("distances", "sigmas", "seeds", "bv_types"):
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)) or len(value) == 0:
                raise ConfigError(f"{name} must be a nonempty list")
        if any(not _positive(d) for d in self.distances):
            raise ConfigError("distances must be positive")
        if any(not _positive(s) for s in self.sigmas):
            raise ConfigError("sigmas must be positive")
        if len(self.sigma_ratios) != 3 or any(not _positive(r) for r in self.sigma_ratios):
            raise ConfigError("sigma_ratios must hold three positive numbers")
        try:
            self.bv_types = [BVType.parse(b).value for b in self.bv_types]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0.0 < float(self.delta) < 1.0:
            raise ConfigError("delta must lie strictly between 0 and 1")
        if int(self.leaf_capacity) < 1:
            raise ConfigError("leaf_capacity must be positive")
        if int(self.mc_samples) < 100:
            raise ConfigError("mc_samples must be at least 100")
        if int(self.aabb_frame_count) < 0:
            raise ConfigError("aabb_frame_count must be nonnegative")
        if self.sphere_method not in ("max", "tessellated"):
            raise ConfigError("sphere_method must be 'max' or 'tessellated'")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self):
        return dataclasses.asdict(self)


def _positive(x):
    try:
        return math.isfinite(float(x)) and float(x) > 0.0
    except (TypeError, ValueError):
        return False


@dataclass(frozen=True)
class BenchmarkRecord:
    """One output row; timing fields come last and are kept out of the main CSV."""

    pair: str
    bv_type: str
    distance: float
    sigma: float
    seed: int
    frame: int
    leaf_capacity: int
    delta: float
    method: str
    bve: float
    cp: float
    root_cp: float
    mc: float
    mc_se: float
    nodes_visited: int
    leaf_pairs: int
    exhaustive_pairs: int
    sound: bool
    status: str = "ok"
    build_ms: float = 0.0
    query_ms: float = 0.0
    mc_ms: float = 0.0


TIMING_FIELDS = ("build_ms", "query_ms", "mc_ms")
KEY_FIELDS = ("pair", "bv_type", "distance", "sigma", "seed", "frame")
ALL_FIELDS = tuple(f.name for f in dataclasses.fields(BenchmarkRecord))
MAIN_FIELDS = tuple(f for f in ALL_FIELDS if f not in TIMING_FIELDS)


def is_sound(cp, mc, se):
    return bool(cp >= mc - 3.0 * se)


# ---------------------------------------------------------------------------
# placement


def place_at_separation(mesh_a, mesh_b, distance, axis=(1.0, 0.0, 0.0), tol=PLACEMENT_TOL,
                        max_steps=PLACEMENT_STEPS):
    """Translation of ``mesh_b`` along ``axis`` giving surface distance ``distance``.

    B starts just past a separating plane at the requested gap and then
    moves toward A.  Distance is 1-Lipschitz in the shift, so stepping by
    the current excess never passes the first contact; when those steps
    stall (grazing approach), bisection on the shift finishes the job.
    The returned placement satisfies ``distance <= d <= distance + tol``.

    Raises
    ------
    NonConvergence
        If ``max_steps`` distance evaluations do not reach the tolerance.
    """
    if distance <= 0:
        raise ValueError("separation distance must be positive")
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    tree_a = TriangleTree.build(mesh_a.triangles)
    tree_b = TriangleTree.build(mesh_b.triangles)

    def gap(s):
        # moving B by +s u is moving A by -s u
        return mesh_distance(tree_a, tree_b, -s * u)

    s = float((mesh_a.vertices @ u).max() - (mesh_b.vertices @ u).min() + distance)
    steps = 0
    d = gap(s)
    while steps < min(ADVANCE_STEPS, max_steps):
        steps += 1
        excess = d - distance
        if excess <= tol:
            return Isometry.from_translation(s * u)
        s -= excess
        d = gap(s)
    if d - distance <= tol:
        return Isometry.from_translation(s * u)

    hi, lo, width = s, None, d - distance
    while steps < max_steps and lo is None:
        steps += 1
        width *= 2.0
        if gap(hi - width) < distance:
            lo = hi - width
    while steps < max_steps and lo is not None:
        steps += 1
        mid = 0.5 * (lo + hi)
        d = gap(mid)
        if d < distance:
            lo = mid
        else:
            hi = mid
            if d - distance <= tol:
                return Isometry.from_translation(hi * u)
    raise NonConvergence(f"placement did not reach {distance} m within {max_steps} steps")


# ---------------------------------------------------------------------------
# experiment loop


def _error_for(config, sigma, seed):
    sigmas = float(sigma) * np.asarray(config.sigma_ratios, dtype=float)
    return GaussianError(np.zeros(3), covariance_from_sigmas(sigmas, random_rotation(int(seed))))


def frame_rotation(seed, frame):
    """Random global frame ``frame`` for Σ seed ``seed``; disjoint from Σ axis seeds."""
    return random_rotation([2, int(seed), int(frame)])


def _load(config):
    a = resolve_mesh(config.mesh_a)
    b = resolve_mesh(config.mesh_b)
    if config.normalize:
        a, b = a.normalized(), b.normalized()
    return a, b


def run_benchmark(config, sink=None, meshes=None):
    """Run the experiment matrix described by ``config``.

    Parameters
    ----------
    config : BenchmarkConfig
    sink : callable, optional
        Called with each record as soon as it exists, so partial runs can
        be written out.
    meshes : tuple of TriMesh, optional
        Preloaded meshes, used instead of ``config.mesh_a`` and ``mesh_b``.

    Returns
    -------
    list of BenchmarkRecord
        Instance failures become rows with ``status`` set to the error.
    """
    mesh_a, mesh_b = meshes if meshes is not None else _load(config)
    pair = f"{mesh_a.name}/{mesh_b.name}"
    records = []

    def emit_row(rec):
        records.append(rec)
        if sink is not None:
            sink(rec)

    def failed(bv, distance, sigma, seed, frame, exc):
        return BenchmarkRecord(pair, bv, float(distance), float(sigma), int(seed), frame,
                               int(config.leaf_capacity), float(config.delta), _method(config, bv),
                               math.nan, math.nan, math.nan, math.nan, math.nan, 0, 0, 0,
                               False, f"error: {type(exc).__name__}: {exc}")

    trees_a = {}
    build_ms_a = {}
    for distance in config.distances:
        try:
            place = place_at_separation(mesh_a, mesh_b, float(distance))
        except (PCDError, ValueError, FloatingPointError) as exc:
            log.error("placement at %g m failed: %s", distance, exc)
            for bv in config.bv_types:
                for sigma in config.sigmas:
                    for seed in config.seeds:
                        emit_row(failed(bv, distance, sigma, seed, -1, exc))
            continue
        offset = place.translation
        placed_b = mesh_b.translated(offset)
        mc_trees = (TriangleTree.build(mesh_a.triangles), TriangleTree.build(placed_b.triangles))
        mc_cache = {}

        def reference(sigma, seed, error):
            key = (sigma, seed)
            if key not in mc_cache:
                mc_cache[key] = monte_carlo_probability(
                    mesh_a, placed_b, error, int(config.mc_samples), seed=int(seed), trees=mc_trees)
            return mc_cache[key]

        for bv in config.bv_types:
            try:
                if bv not in trees_a:
                    t0 = time.perf_counter()
                    trees_a[bv] = (build_bvh(mesh_a, bv, config.leaf_capacity),
                                   build_bvh(mesh_b, bv, config.leaf_capacity))
                    build_ms_a[bv] = 1e3 * (time.perf_counter() - t0)
                tree_a, tree_b0 = trees_a[bv]
                tree_b = translated_tree(tree_b0, offset)
                ratio = bve(mesh_a, tree_a)
            except (PCDError, ValueError, FloatingPointError) as exc:
                for sigma in config.sigmas:
                    for seed in config.seeds:
                        emit_row(failed(bv, distance, sigma, seed, -1, exc))
                continue
            for sigma in config.sigmas:
                for seed in config.seeds:
                    try:
                        error = _error_for(config, sigma, seed)
                        mc = reference(sigma, seed, error)
                        res = general_pcd(PcdQuery(tree_a, tree_b, error, float(config.delta),
                                                   config.sphere_method))
                        emit_row(_record(config, pair, bv, distance, sigma, seed, -1, ratio,
                                         res, mc, tree_a, tree_b, build_ms_a[bv]))
                    except (PCDError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                        emit_row(failed(bv, distance, sigma, seed, -1, exc))
                        continue
                    if bv == BVType.AABB.value:
                        for frame in range(int(config.aabb_frame_count)):
                            try:
                                emit_row(_frame_record(config, pair, mesh_a, placed_b, distance,
                                                       sigma, seed, frame, error, mc))
                            except (PCDError, ValueError, FloatingPointError,
                                    np.linalg.LinAlgError) as exc:
                                emit_row(failed(bv, distance, sigma, seed, frame, exc))
    return records


def _method(config, bv):
    if bv == BVType.SPHERE.value and config.sphere_method == "max":
        return "SphereMax"
    return "ConvexDivergence"


def _record(config, pair, bv, distance, sigma, seed, frame, ratio, res, mc, tree_a, tree_b,
            build_ms):
    return BenchmarkRecord(
        pair, bv, float(distance), float(sigma), int(seed), int(frame),
        int(config.leaf_capacity), float(config.delta), _method(config, bv),
        float(ratio), res.probability_upper, res.root_bound, mc.estimate, mc.std_error,
        res.nodes_visited, res.leaf_pairs_evaluated, exhaustive_pair_count(tree_a, tree_b),
        is_sound(res.probability_upper, mc.estimate, mc.std_error), "ok",
        build_ms, 1e3 * res.elapsed, 1e3 * mc.elapsed)


def _frame_record(config, pair, mesh_a, placed_b, distance, sigma, seed, frame, error, mc):
    # collision events are frame independent, so the canonical MC value is reused
    rot = frame_rotation(seed, frame)
    a, b = mesh_a.rotated(rot), placed_b.rotated(rot)
    t0 = time.perf_counter()
    tree_a = build_bvh(a, BVType.AABB, config.leaf_capacity)
    tree_b = build_bvh(b, BVType.AABB, config.leaf_capacity)
    build_ms = 1e3 * (time.perf_counter() - t0)
    res = general_pcd(PcdQuery(tree_a, tree_b, error.rotated(rot), float(config.delta)))
    return _record(config, pair, BVType.AABB.value, distance, sigma, seed, frame,
                   bve(a, tree_a), res, mc, tree_a, tree_b, build_ms)


# ---------------------------------------------------------------------------
# output


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6g}"
    return str(value)


def csv_text(records, fields=MAIN_FIELDS):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for rec in records:
        writer.writerow([_cell(getattr(rec, f)) for f in fields])
    return buf.getvalue()


class CsvSink:
    """Appends records to a CSV as they arrive (header first, one flush per row)."""

    def __init__(self, path, fields=MAIN_FIELDS):
        self.path = Path(path)
        self.fields = fields
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(fields)
        self._fh.flush()

    def __call__(self, rec):
        self._writer.writerow([_cell(getattr(rec, f)) for f in self.fields])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def timing_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".timing.csv")


def _grouped_means(records):
    groups = {}
    for r in records:
        if r.frame != -1 or r.status != "ok":
            continue
        groups.setdefault((r.bv_type, r.distance), []).append(r)
    return groups


def table_text(records):
    """Fixed-width table: one row per bounding volume, one column group per distance.

    Each group shows BVE, the mean bound and mean Monte Carlo estimate (in
    percent) and the mean query time over every sigma and seed.
    """
    groups = _grouped_means(records)
    bvs = list(dict.fromkeys(r.bv_type for r in records))
    distances = sorted({r.distance for r in records})
    head1 = f"{'':10}" + "".join(f"| {f'd = {d * 100:g} cm':^34} " for d in distances)
    head2 = f"{'BV':10}" + "".join(f"| {'BVE':>7} {'CP %':>8} {'MC %':>8} {'ms':>8} " for _ in distances)
    lines = [head1, head2, "-" * len(head2)]
    for bv in bvs:
        row = f"{bv:10}"
        for d in distances:
            rs = groups.get((bv, d), [])
            if not rs:
                row += f"| {'n/a':>34} "
                continue
            row += (f"| {rs[0].bve:7.3f} {100 * np.mean([r.cp for r in rs]):8.3f}"
                    f" {100 * np.mean([r.mc for r in rs]):8.3f}"
                    f" {np.mean([r.query_ms for r in rs]):8.1f} ")
        lines.append(row)
    bad = [r for r in records if r.status != "ok" or not r.sound]
    if bad:
        lines.append(f"{len(bad)} row(s) failed or violated CP >= MC - 3 SE")
    return "\n".join(lines) + "\n"


def emit(records, fmt="csv", out=None, timing=False):
    """Write records as CSV or as a table, to ``out`` or return the text.

    With ``timing`` the CSV also carries the wall-clock columns, which
    makes it differ between runs.
    """
    if not records:
        raise ValueError("no records to emit")
    if fmt == "csv":
        text = csv_text(records, ALL_FIELDS if timing else MAIN_FIELDS)
    elif fmt == "table":
        text = table_text(records)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if out is not None:
        Path(out).write_text(text)
    return text


def write_timing(records, path):
    Path(path).write_text(csv_text(records, KEY_FIELDS + TIMING_FIELDS))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
