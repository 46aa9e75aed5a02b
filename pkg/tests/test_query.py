import math

import numpy as np
import pytest
from scipy import stats

from pcdbound import convex as cx
from pcdbound.bvh import build_bvh, exhaustive_pair_count, translated_tree
from pcdbound.geometry import GaussianError, Isometry, covariance_from_sigmas, random_rotation
from pcdbound.mesh import TriMesh, box_mesh, bunny_like_mesh, sphere_mesh
from pcdbound.query import (
    PcdQuery, TriangleTree, exact_collide, gaussian_samples, general_pcd, mesh_distance,
    monte_carlo_probability, placed_trees, triangle_pair_distance, winding_number,
)

from conftest import random_polytope


def hull_mesh(poly):
    return TriMesh(poly.vertices, poly.faces, "hull")


def segment_hits_triangle(p, q, tri, eps=1e-12):
    """Moller-Trumbore on the segment p->q."""
    d = q - p
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    h = np.cross(d, e2)
    a = e1 @ h
    if abs(a) < eps:
        return False
    f = 1.0 / a
    s = p - tri[0]
    u = f * (s @ h)
    if u < 0 or u > 1:
        return False
    qv = np.cross(s, e1)
    v = f * (d @ qv)
    if v < 0 or u + v > 1:
        return False
    t = f * (e2 @ qv)
    return 0 <= t <= 1


def triangles_intersect(t1, t2):
    return any(segment_hits_triangle(t1[i], t1[(i + 1) % 3], t2) for i in range(3)) or \
        any(segment_hits_triangle(t2[i], t2[(i + 1) % 3], t1) for i in range(3))


def inside_convex(poly, p):
    offsets = np.einsum("ij,ij->i", poly.normals, poly.vertices[poly.faces[:, 0]])
    return bool(np.all(poly.normals @ p - offsets <= 0))


def brute_collide(pa, pb):
    ta, tb = pa.triangles, pb.triangles
    if any(triangles_intersect(x, y) for x in ta for y in tb):
        return True
    return inside_convex(pb, pa.vertices[0]) or inside_convex(pa, pb.vertices[0])


def test_exact_collide_cubes():
    a = box_mesh()
    assert exact_collide(a, a.translated([0.5, 0.2, 0.1]))
    assert not exact_collide(a, a.translated([1.01, 0, 0]))
    assert exact_collide(a, a.translated([1.0, 0, 0]))  # touching counts
    assert exact_collide(a, box_mesh([0.3] * 3, [0.6] * 3))  # containment
    assert exact_collide(box_mesh([0.3] * 3, [0.6] * 3), a)
    iso = Isometry(random_rotation(4), [4.0, 0, 0])
    assert not exact_collide(a, a, iso_b=iso)


def test_exact_collide_matches_brute_force(rng):
    agree = 0
    hits = 0
    for k in range(100):
        pa = random_polytope(rng, n=int(rng.integers(6, 14)), scale=0.5)
        pb = random_polytope(rng, n=int(rng.integers(6, 14)), scale=0.5,
                             center=rng.normal(size=3) * 0.8)
        want = brute_collide(pa, pb)
        got = exact_collide(hull_mesh(pa), hull_mesh(pb))
        assert got == exact_collide(hull_mesh(pb), hull_mesh(pa))
        agree += got == want
        hits += want
    assert agree == 100
    assert 20 <= hits <= 80


def test_winding_number_inside_outside():
    m = sphere_mesh(1.0, level=2)
    w = winding_number(np.array([[0, 0, 0], [0.5, 0.2, 0], [2, 0, 0]], float), m.triangles)
    np.testing.assert_allclose(w, [1, 1, 0], atol=1e-9)


def test_gaussian_samples_counter_based(rng):
    err = GaussianError(np.array([0.1, 0, 0]), covariance_from_sigmas([0.1, 0.2, 0.3], random_rotation(2)))
    full = gaussian_samples(err, 5000, seed=7)
    np.testing.assert_array_equal(full[1500:3100], gaussian_samples(err, 1600, seed=7, first=1500))
    assert not np.array_equal(full, gaussian_samples(err, 5000, seed=8))
    np.testing.assert_allclose(np.cov(full.T), err.covariance, atol=0.003)


def cube_closed_form(gap, sigma):
    # A = [-.5, .5]^3 + eps hits B = A + (1 + gap) e_x iff |eps_x - 1 - gap| <= 1, |eps_y|, |eps_z| <= 1
    px = stats.norm.cdf((2 + gap) / sigma) - stats.norm.cdf(gap / sigma)
    pyz = (2 * stats.norm.cdf(1 / sigma) - 1) ** 2
    return px * pyz


@pytest.mark.parametrize("gap, sigma", [(0.1, 0.5), (0.05, 0.1), (0.3, 0.3)])
def test_mc_cubes_closed_form(gap, sigma):
    a = box_mesh([-0.5] * 3, [0.5] * 3)
    b = a.translated([1 + gap, 0, 0])
    err = GaussianError(np.zeros(3), sigma**2 * np.eye(3))
    res = monte_carlo_probability(a, b, err, 20_000, seed=1)
    want = cube_closed_form(gap, sigma)
    assert abs(res.estimate - want) <= 3 * max(res.std_error, 1e-4)
    assert res.hits == round(res.estimate * res.n_samples)


def test_mc_determinism_and_trivial_cases():
    a = sphere_mesh(0.5, level=2)
    err = GaussianError(np.zeros(3), 0.01 * np.eye(3))
    r1 = monte_carlo_probability(a, a.translated([1.05, 0, 0]), err, 2000, seed=3)
    r2 = monte_carlo_probability(a, a.translated([1.05, 0, 0]), err, 2000, seed=3)
    assert r1.estimate == r2.estimate and 0 < r1.estimate < 1
    assert monte_carlo_probability(a, a.translated([100.0, 0, 0]), err, 1000).estimate == 0.0
    tiny = GaussianError(np.zeros(3), 1e-8 * np.eye(3))
    assert monte_carlo_probability(a, a, tiny, 1000).estimate == 1.0
    with pytest.raises(ValueError):
        monte_carlo_probability(a, a, err, 10)


@pytest.fixture(scope="module")
def bunny():
    return bunny_like_mesh(level=3)


def test_general_pcd_far_culls_at_root(bunny):
    sigma = 0.01
    err = GaussianError(np.zeros(3), sigma**2 * np.eye(3))
    for kind in ("sphere", "aabb", "obb", "kdop26", "convex"):
        ta = build_bvh(bunny, kind, 4)
        tb = translated_tree(ta, [1.0 + 100 * sigma, 0, 0])
        res = general_pcd(PcdQuery(ta, tb, err, 0.99))
        assert res.nodes_visited == 1
        assert res.probability_upper < 1e-9


def test_general_pcd_overlap_is_one(bunny):
    err = GaussianError(np.zeros(3), 1e-4 * np.eye(3))
    ta = build_bvh(bunny, "obb", 16)
    res = general_pcd(PcdQuery(ta, ta, err, 0.99))
    assert res.probability_upper == 1.0
    assert res.leaf_pairs_evaluated >= 1


def test_confidence_monotone_work_and_soundness(bunny):
    err = GaussianError(np.zeros(3), covariance_from_sigmas([0.03, 0.02, 0.01], random_rotation(5)))
    off = np.array([1.05, 0, 0])
    mc = monte_carlo_probability(bunny, bunny.translated(off), err, 4000, seed=0)
    for kind in ("aabb", "kdop26", "convex"):
        ta = build_bvh(bunny, kind, 16)
        tb = translated_tree(ta, off)
        visits = []
        for delta in (0.9, 0.99, 0.999):
            res = general_pcd(PcdQuery(ta, tb, err, delta))
            assert res.probability_upper >= mc.estimate - 3 * mc.std_error
            assert 1 <= res.nodes_visited
            visits.append(res.nodes_visited)
        assert visits == sorted(visits)
        again = general_pcd(PcdQuery(ta, tb, err, 0.999))
        assert again.probability_upper == res.probability_upper
        assert res.leaf_pairs_evaluated <= exhaustive_pair_count(ta, tb)


def test_pcd_query_validates():
    tree = build_bvh(box_mesh(), "aabb")
    err = GaussianError(np.zeros(3), np.eye(3))
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            PcdQuery(tree, tree, err, bad)


def test_mesh_distance_cubes():
    a = box_mesh()
    ta, tb = placed_trees(a, a.translated([1.3, 0, 0]))
    assert mesh_distance(ta, tb) == pytest.approx(0.3, abs=1e-12)
    assert mesh_distance(ta, tb, offset=[0.3, 0, 0]) == pytest.approx(0.0, abs=1e-12)
    assert mesh_distance(ta, tb, offset=[0, 0, 1.5]) == pytest.approx(math.hypot(0.3, 0.5), abs=1e-12)


def test_mesh_distance_matches_gjk_and_brute_force(rng):
    for _ in range(20):
        pa = random_polytope(rng, scale=0.3)
        pb = random_polytope(rng, scale=0.3, center=rng.normal(size=3) * 2)
        ta = TriangleTree.build(pa.triangles)
        tb = TriangleTree.build(pb.triangles)
        d = mesh_distance(ta, tb)
        ia, ib = np.meshgrid(np.arange(len(pa.faces)), np.arange(len(pb.faces)), indexing="ij")
        brute = triangle_pair_distance(pa.triangles[ia.ravel()], pb.triangles[ib.ravel()]).min()
        assert d == pytest.approx(brute, abs=1e-12)
        g = cx.gjk_distance(pa, pb)
        if not g.intersecting:
            assert d == pytest.approx(g.distance, abs=1e-7)
