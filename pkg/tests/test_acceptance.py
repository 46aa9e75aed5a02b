"""Acceptance criteria 1-8.

Each test prints one ``CRITERION n: PASS|FAIL`` line; the lines are repeated
in the pytest terminal summary.  Tolerances and sizes are pinned below.
"""
import json
import math
import time

import numpy as np
from scipy import optimize, stats

from pcdbound import bench, cli
from pcdbound import convex as cx
from pcdbound.bound import (
    convex_pcd, field_f, relaxed_density, sphere_pcd_center, sphere_pcd_max,
)
from pcdbound.bvh import build_bvh, exhaustive_pair_count, translated_tree
from pcdbound.geometry import GaussianError, covariance_from_sigmas, random_rotation
from pcdbound.mesh import box_mesh, bunny_like_mesh
from pcdbound.query import PcdQuery, general_pcd, monte_carlo_probability

from conftest import mc_convex, random_polytope, report

# 1: soundness suite
SOUND_INSTANCES = 200
SOUND_MC_SAMPLES = 100_000
SOUND_SIGMA = (0.01, 0.1)
SOUND_MAX_SEPARATION = 5.0  # in units of the largest sigma
SE_FACTOR = 3.0
# 2: divergence and flux
DIV_POINTS = 10_000
DIV_ATOL = 1e-6
FLUX_RTOL = 1e-4
# 3: Minkowski cross-checks
MINK_PAIRS = 100
MINK_DIRECTIONS = 1000
MINK_ATOL = 1e-8
# 4: sphere baseline
SPHERE_PAIRS = 100
SPHERE_MC_SAMPLES = 100_000
# 5: BV ordering on the bunny benchmark
TABLE_DISTANCES = [0.01, 0.05]
TABLE_SIGMAS = [0.01, 0.03, 0.05]
TABLE_SEEDS = list(range(10))
TABLE_LEAF_CAPACITY = 64
TABLE_AABB_FRAMES = 2
TABLE_MC_SAMPLES = 10_000
TABLE_RUNTIME_S = 15 * 60
# reference anchors only (bunny, 1 cm), never asserted
TABLE_ANCHORS = {"mc": 0.132, "sphere": 0.457, "aabb": 0.326, "obb": 0.203, "kdop26": 0.167,
                 "convex": 0.142}
# 6: culling
CULL_DISTANCE = 0.05
CULL_SIGMA = 0.03
CULL_DELTA = 0.99
CULL_FRACTION = 0.20
CULL_LEAF_CAPACITY = 4
# 7: axis-aligned cubes
CUBE_MC_SAMPLES = 100_000

ORDER = ["convex", "kdop26", "obb", "aabb", "sphere"]


def unit_directions(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def support_values(shape, dirs):
    return (cx.to_polytope(shape).vertices @ dirs.T).max(axis=0)


def place_convex(a, b, gap, direction):
    """Translate ``b`` along ``direction`` until its distance to ``a`` equals ``gap``."""
    far = 10.0 * (a.diameter + b.diameter)

    def excess(s):
        return cx.gjk_distance(a, b.translated(s * direction)).distance - gap

    s = optimize.brentq(excess, 0.0, far, xtol=1e-12) if gap > 0 else 0.0
    return b.translated(s * direction)


# ---------------------------------------------------------------------------


def test_criterion_1_soundness():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, violations = math.inf, 0
    for k in range(SOUND_INSTANCES):
        a = random_polytope(rng, n=int(rng.integers(10, 51)), scale=0.5)
        b = random_polytope(rng, n=int(rng.integers(10, 51)), scale=0.5)
        scale = max(a.diameter, b.diameter)
        sig = rng.uniform(*SOUND_SIGMA, size=3) * scale
        err = GaussianError(np.zeros(3), covariance_from_sigmas(sig, random_rotation(k)))
        gap = rng.uniform(0.0, SOUND_MAX_SEPARATION) * sig.max()
        b = place_convex(a, b, gap, unit_directions(rng, 1)[0])
        cp = convex_pcd(a, b, err).probability_upper
        p, se = mc_convex(a, b, err, SOUND_MC_SAMPLES, seed=k)
        margin = cp - (p - SE_FACTOR * se)
        worst = min(worst, margin)
        violations += margin < 0
    elapsed = time.perf_counter() - start
    ok = violations == 0
    report(1, ok, f"{SOUND_INSTANCES - violations}/{SOUND_INSTANCES} instances with CP >= MC - 3 SE "
                  f"(worst margin {worst:.3g}), {elapsed:.0f} s (target < 600 s)")
    assert ok


def _tet_quadrature(n=12):
    """Collapsed Gauss-Legendre rule on the unit tetrahedron: (points, weights)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    a, b, c = np.meshgrid(x, x, x, indexing="ij")
    wa, wb, wc = np.meshgrid(w, w, w, indexing="ij")
    p = np.stack([a, (1 - a) * b, (1 - a) * (1 - b) * c], axis=-1).reshape(-1, 3)
    wt = (wa * wb * wc * (1 - a) ** 2 * (1 - b)).ravel()
    return p, wt


def _tri_quadrature(n=16):
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    a, b = np.meshgrid(x, x, indexing="ij")
    wa, wb = np.meshgrid(w, w, indexing="ij")
    p = np.stack([a, (1 - a) * b], axis=-1).reshape(-1, 2)
    return p, (wa * wb * (1 - a)).ravel()


def test_criterion_2_divergence_and_flux():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    h = 1e-4
    x = rng.normal(size=(DIV_POINTS, 3)) * 2
    n = unit_directions(rng, DIV_POINTS)
    div = np.zeros(DIV_POINTS)
    fplus = np.stack([np.array([field_f(x[i] + dh, n[i]) for i in range(DIV_POINTS)])
                      for dh in np.eye(3) * h])
    fminus = np.stack([np.array([field_f(x[i] - dh, n[i]) for i in range(DIV_POINTS)])
                       for dh in np.eye(3) * h])
    for k in range(3):
        div += (fplus[k][:, k] - fminus[k][:, k]) / (2 * h)
    dens = np.array([relaxed_density(x[i], n[i]) for i in range(DIV_POINTS)])
    div_err = float(np.abs(div - dens).max())

    # exact flux through a random small polytope against 3D quadrature of the density
    poly = random_polytope(rng, n=20, scale=0.4, center=[0.3, -0.2, 0.1])
    nd = unit_directions(rng, 1)[0]
    tp, tw = _tri_quadrature()
    flux = 0.0
    for tri, normal in zip(poly.triangles, poly.normals):
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        pts = tri[0] + tp[:, :1] * e1 + tp[:, 1:] * e2
        jac = np.linalg.norm(np.cross(e1, e2))
        flux += jac * np.dot(tw, field_f(pts, nd) @ normal)
    qp, qw = _tet_quadrature()
    c = poly.vertices.mean(axis=0)
    volume_int = 0.0
    for tri in poly.triangles:
        m = np.stack([tri[0] - c, tri[1] - c, tri[2] - c], axis=1)
        pts = c + qp @ m.T
        volume_int += abs(np.linalg.det(m)) * np.dot(qw, relaxed_density(pts, nd))
    flux_rel = abs(flux - volume_int) / volume_int
    elapsed = time.perf_counter() - start
    ok = div_err <= DIV_ATOL and flux_rel <= FLUX_RTOL
    report(2, ok, f"max |div F - density| = {div_err:.2e} (tol {DIV_ATOL:g}); flux vs quadrature "
                  f"rel err {flux_rel:.2e} (tol {FLUX_RTOL:g}); {elapsed:.1f} s")
    assert ok


def test_criterion_3_minkowski_cross_checks():
    rng = np.random.default_rng(33)
    box_err = kdop_err = 0.0
    kdop_bad = 0
    for _ in range(MINK_PAIRS):
        dirs = unit_directions(rng, MINK_DIRECTIONS)
        ba = cx.Box(rng.normal(size=3), rng.uniform(0.1, 1.0, size=3), random_rotation(int(rng.integers(1 << 31))))
        bb = cx.Box(rng.normal(size=3), rng.uniform(0.1, 1.0, size=3), random_rotation(int(rng.integers(1 << 31))))
        t = rng.normal(size=(3, 3)) + 2 * np.eye(3)
        za, zb = cx.apply_linear(ba, t), cx.apply_linear(bb, t)
        for a, b in ((ba, bb), (za, zb)):
            fast = cx.minkowski_sum_boxes(cx.negate(a), b)
            general = cx.minkowski_sum_general(cx.to_polytope(a).negated(), cx.to_polytope(b))
            box_err = max(box_err, float(np.abs(support_values(fast, dirs) - support_values(general, dirs)).max()))
        ka = cx.Kdop26.from_points(rng.normal(size=(30, 3)) * rng.uniform(0.2, 1, size=3))
        kb = cx.Kdop26.from_points(rng.normal(size=(30, 3)) * rng.uniform(0.2, 1, size=3) + 2)
        fast = cx.minkowski_sum_kdop(ka.negated(), kb)
        general = cx.minkowski_sum_general(cx.to_polytope(ka).negated(), cx.to_polytope(kb))
        gap = support_values(fast, dirs) - support_values(general, dirs)
        kdop_err = max(kdop_err, float(np.abs(gap).max()))
        kdop_bad += bool(np.abs(gap).max() > MINK_ATOL)
        # the slab sum must still contain the exact sum
        assert gap.min() >= -MINK_ATOL
    ok_box = box_err <= MINK_ATOL
    ok_kdop = kdop_err <= MINK_ATOL
    report(3, ok_box and ok_kdop,
           f"box/zonotope max support gap {box_err:.2e}; k-DOP slab sum max support gap "
           f"{kdop_err:.2e} ({kdop_bad}/{MINK_PAIRS} pairs over {MINK_ATOL:g}); tol {MINK_ATOL:g}")
    assert ok_box, "box/zonotope path"
    assert ok_kdop, "k-DOP slab sum is a superset of the exact sum, see decisions ledger"


def test_criterion_4_sphere_baseline():
    rng = np.random.default_rng(44)
    sound = 0
    above = below = 0
    for k in range(SPHERE_PAIRS):
        ra, rb = rng.uniform(0.05, 0.5, size=2)
        sa = cx.Sphere(np.zeros(3), ra)
        direction = unit_directions(rng, 1)[0]
        sig = rng.uniform(0.02, 0.3, size=3)
        cov = covariance_from_sigmas(sig, random_rotation(k))
        gap = rng.uniform(0, 4) * sig.max()
        sb = cx.Sphere((ra + rb + gap) * direction, rb)
        err = GaussianError(np.zeros(3), cov)
        eps = rng.multivariate_normal(np.zeros(3), cov, size=SPHERE_MC_SAMPLES)
        hit = np.linalg.norm(sb.center - eps, axis=1) <= ra + rb
        p = hit.mean()
        se = math.sqrt(p * (1 - p) / SPHERE_MC_SAMPLES)
        sound += sphere_pcd_max(sa, sb, err).probability_upper >= p - SE_FACTOR * se
        c = sphere_pcd_center(sa, sb, err).probability_upper
        above += c > p + SE_FACTOR * se
        below += c < p - SE_FACTOR * se
    ok = sound == SPHERE_PAIRS
    report(4, ok, f"sphere_pcd_max sound on {sound}/{SPHERE_PAIRS}; sphere_pcd_center above MC on "
                  f"{above}, below MC on {below} (measured only)")
    assert ok


def _mean(values):
    return float(np.mean(values)) if values else math.nan


def test_criterion_5_table_ordering(tmp_path):
    cfg = bench.BenchmarkConfig(
        distances=TABLE_DISTANCES, sigmas=TABLE_SIGMAS, seeds=TABLE_SEEDS, bv_types=ORDER[::-1],
        leaf_capacity=TABLE_LEAF_CAPACITY, aabb_frame_count=TABLE_AABB_FRAMES,
        mc_samples=TABLE_MC_SAMPLES, output=str(tmp_path / "table.csv"), figures=False)
    start = time.perf_counter()
    with bench.CsvSink(cfg.output) as sink:
        recs = bench.run_benchmark(cfg, sink=sink)
    elapsed = time.perf_counter() - start
    ok_rows = [r for r in recs if r.status == "ok"]
    bve = {bv: _mean([r.bve for r in ok_rows if r.bv_type == bv and r.frame == -1]) for bv in ORDER}
    bve_ok = all(bve[x] <= bve[y] for x, y in zip(ORDER, ORDER[1:]))

    cp_ok, obb_lt_aabb, lines = True, [], []
    for d in TABLE_DISTANCES:
        cp = {}
        for bv in ORDER:
            frames = [r.cp for r in ok_rows if r.bv_type == bv and r.distance == d and r.frame >= 0]
            canon = [r.cp for r in ok_rows if r.bv_type == bv and r.distance == d and r.frame == -1]
            cp[bv] = _mean(frames if frames else canon)
        mc = _mean([r.mc for r in ok_rows if r.bv_type == "convex" and r.distance == d])
        tol = 1e-12
        chain = [("convex", "kdop26"), ("kdop26", "obb"), ("obb", "sphere"),
                 ("convex", "aabb"), ("aabb", "sphere")]
        cp_ok &= all(cp[x] <= cp[y] + tol for x, y in chain)
        obb_lt_aabb.append(cp["obb"] < cp["aabb"])
        lines.append(f"d={100 * d:g}cm MC {100 * mc:.2f}% " +
                     " ".join(f"{bv} {100 * cp[bv]:.2f}%" for bv in ORDER))
    sound = all(r.sound for r in ok_rows) and len(ok_rows) == len(recs)
    ok = bve_ok and cp_ok and sound
    report(5, ok, f"BVE ordering {'ok' if bve_ok else 'violated'} "
                  f"({', '.join(f'{bv} {bve[bv]:.3f}' for bv in ORDER)}); CP ordering "
                  f"{'ok' if cp_ok else 'violated'}; sound rows {sum(r.sound for r in ok_rows)}/{len(recs)}; "
                  f"OBB < AABB (reported only): {obb_lt_aabb}; {elapsed:.0f} s (target < {TABLE_RUNTIME_S} s)")
    for line in lines:
        print("    " + line)
    print("    reference anchors, not reproducible: " +
          " ".join(f"{k} {100 * v:.1f}%" for k, v in TABLE_ANCHORS.items()))
    assert bve_ok and cp_ok and sound


def test_criterion_6_culling():
    mesh = bunny_like_mesh()
    off = bench.place_at_separation(mesh, mesh, CULL_DISTANCE).translation
    err = GaussianError(np.zeros(3), covariance_from_sigmas([CULL_SIGMA] * 3, random_rotation(0)))
    far_err = GaussianError(np.zeros(3), 1e-4 * np.eye(3))
    far_off = bench.place_at_separation(mesh, mesh, 100 * 0.01).translation
    parts, ok = [], True
    for bv in ORDER:
        ta = build_bvh(mesh, bv, CULL_LEAF_CAPACITY)
        tb = translated_tree(ta, off)
        res = general_pcd(PcdQuery(ta, tb, err, CULL_DELTA))
        frac = res.nodes_visited / exhaustive_pair_count(ta, tb)
        far = general_pcd(PcdQuery(ta, translated_tree(ta, far_off), far_err, CULL_DELTA))
        ok &= frac < CULL_FRACTION and far.nodes_visited == 1
        parts.append(f"{bv} {100 * frac:.3f}%/{far.nodes_visited}")
    report(6, ok, "visited share of leaf pairs / nodes at 100 sigma: " + ", ".join(parts) +
                  f" (limit {100 * CULL_FRACTION:g}% and 1)")
    assert ok


def test_criterion_7_axis_aligned_cubes():
    a = box_mesh([-0.5] * 3, [0.5] * 3)
    parts, ok = [], True
    cases = [(0.01, 0.05, CUBE_MC_SAMPLES), (0.05, 0.1, CUBE_MC_SAMPLES),
             (0.2, 0.3, CUBE_MC_SAMPLES), (0.0, 0.5, CUBE_MC_SAMPLES), (0.04, 0.01, 10 * CUBE_MC_SAMPLES)]
    for k, (gap, sigma, n) in enumerate(cases):
        b = a.translated([1 + gap, 0, 0])
        err = GaussianError(np.zeros(3), sigma**2 * np.eye(3))
        px = stats.norm.cdf((2 + gap) / sigma) - stats.norm.cdf(gap / sigma)
        pyz = (2 * stats.norm.cdf(1 / sigma) - 1) ** 2
        exact = px * pyz
        mc = monte_carlo_probability(a, b, err, n, seed=k)
        cp = convex_pcd(cx.Aabb(np.full(3, -0.5), np.full(3, 0.5)),
                        cx.Aabb(np.array([0.5 + gap, -0.5, -0.5]), np.array([1.5 + gap, 0.5, 0.5])),
                        err).probability_upper
        ok &= abs(mc.estimate - exact) <= SE_FACTOR * mc.std_error and cp >= exact
        parts.append(f"gap {gap:g} sigma {sigma:g}: exact {exact:.3g} MC {mc.estimate:.3g} CP {cp:.3g}")
    report(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_determinism(tmp_path, capsys):
    outputs = []
    for k in range(2):
        cfg = dict(distances=[0.05], sigmas=[0.03], seeds=[0, 1], leaf_capacity=64,
                   aabb_frame_count=2, mc_samples=2000, figures=False,
                   output=str(tmp_path / f"run{k}.csv"))
        path = tmp_path / f"c{k}.json"
        path.write_text(json.dumps(cfg))
        assert cli.main(["bench", "--config", str(path), "--format", "csv"]) == 0
        outputs.append((tmp_path / f"run{k}.csv").read_bytes())
    capsys.readouterr()
    ok = outputs[0] == outputs[1] and len(outputs[0].splitlines()) > 1
    report(8, ok, f"two bench runs, {len(outputs[0].splitlines()) - 1} rows each, byte-identical: {ok}")
    assert ok
