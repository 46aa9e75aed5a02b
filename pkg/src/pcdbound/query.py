"""Hierarchical probability queries, exact interference and the Monte Carlo oracle.

Exact collision between two closed meshes under a pure translation ``t`` of
mesh A is decided in two steps:

1. Surface contact.  For a triangle pair the separating-axis candidates
   (both normals, the nine edge cross products and the six in-plane edge
   normals) do not depend on ``t``; each candidate axis ``L`` turns the
   pair into a slab constraint ``t . L in [lo, hi]``.  The pair touches iff
   every slab holds, so one pass of precomputation tests any number of
   translations at once.  Candidate pairs come from a simultaneous AABB
   tree descent that carries the set of still-undecided samples.
2. Containment.  Without surface contact the solids overlap only if one
   encloses the other; that needs one box inside the other box and is then
   settled with a winding-number point test.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .bound import PreparedShape, prepared_pcd
from .convex import closest_points_on_triangles
from .geometry import GaussianError, Isometry

MC_BLOCK = 1024


# ---------------------------------------------------------------------------
# Algorithm 2


@dataclass(frozen=True)
class PcdQuery:
    tree_a: object
    tree_b: object
    error: GaussianError
    confidence: float = 0.99
    sphere_method: str = "max"

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence level must lie strictly between 0 and 1")


@dataclass(frozen=True)
class PcdResult:
    """Outcome of :func:`general_pcd`.

    ``root_bound`` is the convex-pair bound of the two root volumes, kept for
    comparison with the refined child sum.
    """

    probability_upper: float
    nodes_visited: int
    leaf_pairs_evaluated: int
    elapsed: float
    root_bound: float


def general_pcd(query):
    """Upper bound on the collision probability of two meshes via their BVHs.

    The convex bound of the current node pair is returned when it is below
    ``1 - confidence`` or when both nodes are leaves; otherwise the larger
    node (by volume, ties to A; an internal node always beats a leaf) is
    split and the children's bounds are summed.  The total is clamped to 1.
    """
    nodes_a, nodes_b = query.tree_a.nodes, query.tree_b.nodes
    error, method = query.error, query.sphere_method
    threshold = 1.0 - query.confidence
    stats = {"nodes": 0, "leaves": 0}
    start = time.perf_counter()

    prep_a, prep_b = {}, {}

    def bound(ia, ib):
        if ia not in prep_a:
            prep_a[ia] = PreparedShape(nodes_a[ia].bv, error, True)
        if ib not in prep_b:
            prep_b[ib] = PreparedShape(nodes_b[ib].bv, error, False)
        return prepared_pcd(prep_a[ia], prep_b[ib], error, method).probability_upper

    def visit(ia, ib, p=None):
        na, nb = nodes_a[ia], nodes_b[ib]
        stats["nodes"] += 1
        if p is None:
            p = bound(ia, ib)
        both_leaves = na.is_leaf and nb.is_leaf
        if both_leaves:
            stats["leaves"] += 1
        if p < threshold or both_leaves:
            return p
        if not na.is_leaf and (nb.is_leaf or na.volume >= nb.volume):
            return visit(na.left, ib) + visit(na.right, ib)
        return visit(ia, nb.left) + visit(ia, nb.right)

    root = bound(0, 0)
    total = visit(0, 0, root)
    elapsed = time.perf_counter() - start
    return PcdResult(min(max(total, 0.0), 1.0), stats["nodes"], stats["leaves"], elapsed, root)


# ---------------------------------------------------------------------------
# lightweight AABB trees for exact queries


@dataclass(frozen=True, eq=False)
class TriangleTree:
    """AABB tree over a triangle array, stored as flat arrays."""

    triangles: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    order: np.ndarray

    @classmethod
    def build(cls, triangles, leaf_size=8):
        tris = np.ascontiguousarray(triangles, dtype=float)
        cent = tris.mean(axis=1)
        tmin, tmax = tris.min(axis=1), tris.max(axis=1)
        order = np.arange(len(tris))
        rows = []

        def split(s, e):
            i = len(rows)
            rows.append([s, e, -1, -1])
            if e - s > leaf_size:
                idx = order[s:e]
                c = cent[idx]
                axis = int(np.argmax(np.ptp(c, axis=0)))
                order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
                m = s + (e - s) // 2
                rows[i][2] = split(s, m)
                rows[i][3] = split(m, e)
            return i

        split(0, len(tris))
        rows = np.array(rows, dtype=np.int64)
        lo = np.array([tmin[order[s:e]].min(axis=0) for s, e, _, _ in rows])
        hi = np.array([tmax[order[s:e]].max(axis=0) for s, e, _, _ in rows])
        return cls(tris[order], lo, hi, rows[:, 2], rows[:, 3], rows[:, 0], rows[:, 1],
                   order)

    def is_leaf(self, i):
        return self.left[i] < 0


def _pairs(ta, tb):
    return np.repeat(ta, len(tb), axis=0), np.tile(tb, (len(ta), 1, 1))


def _sat_slabs(a, b):
    """Separating-axis slabs for the row-wise triangle pairs ``(a[p], b[p])``.

    Returns ``axes`` of shape ``(P, 17, 3)`` and bounds ``lo, hi`` of shape
    ``(P, 17)`` such that ``(a + t)`` meets ``b`` iff ``lo <= t . axis <= hi``
    on every axis.  Degenerate (zero) axes get infinite bounds.
    """
    ea = np.stack([a[:, 1] - a[:, 0], a[:, 2] - a[:, 1], a[:, 0] - a[:, 2]], axis=1)
    eb = np.stack([b[:, 1] - b[:, 0], b[:, 2] - b[:, 1], b[:, 0] - b[:, 2]], axis=1)
    na = np.cross(ea[:, 0], ea[:, 1])
    nb = np.cross(eb[:, 0], eb[:, 1])
    cross = np.cross(ea[:, :, None, :], eb[:, None, :, :]).reshape(-1, 9, 3)
    inplane_a = np.cross(na[:, None, :], ea)
    inplane_b = np.cross(nb[:, None, :], eb)
    axes = np.concatenate([na[:, None], nb[:, None], cross, inplane_a, inplane_b], axis=1)
    pa = np.einsum("pkd,pjd->pkj", axes, a)
    pb = np.einsum("pkd,pjd->pkj", axes, b)
    lo = pb.min(axis=2) - pa.max(axis=2)
    hi = pb.max(axis=2) - pa.min(axis=2)
    norm = np.linalg.norm(axes, axis=2)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    edge = max(np.linalg.norm(ea, axis=2).max(), np.linalg.norm(eb, axis=2).max(), 1e-300)
    dead = norm <= 1e-12 * edge * edge
    tol = 1e-12 * scale * norm
    lo = np.where(dead, -np.inf, lo - tol)
    hi = np.where(dead, np.inf, hi + tol)
    return axes, lo, hi


def triangle_pairs_touch(ta, tb, offsets, chunk=1 << 21):
    """For each translation ``t`` in ``offsets``: does any ``a + t`` meet any ``b``?"""
    axes, lo, hi = _sat_slabs(*_pairs(ta, tb))
    flat_axes = axes.reshape(-1, 3)
    n = len(offsets)
    out = np.zeros(n, dtype=bool)
    per = max(1, chunk // max(flat_axes.shape[0], 1))
    for s in range(0, n, per):
        t = offsets[s:s + per]
        proj = (t @ flat_axes.T).reshape(len(t), *lo.shape)
        ok = np.all((proj >= lo) & (proj <= hi), axis=2)
        out[s:s + per] = ok.any(axis=1)
    return out


def winding_number(points, triangles, chunk=1 << 20):
    """Generalized winding number of closed triangle surfaces at ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(pts))
    per = max(1, chunk // max(len(triangles), 1))
    for s in range(0, len(pts), per):
        p = pts[s:s + per, None, None, :]
        r = triangles[None] - p
        a, b, c = r[:, :, 0], r[:, :, 1], r[:, :, 2]
        la, lb, lc = (np.linalg.norm(x, axis=-1) for x in (a, b, c))
        det = np.einsum("...i,...i->...", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("...i,...i->...", a, b) * lc
               + np.einsum("...i,...i->...", a, c) * lb
               + np.einsum("...i,...i->...", b, c) * la)
        out[s:s + per] = 2.0 * np.arctan2(det, den).sum(axis=1) / (4.0 * math.pi)
    return out


def collide_translations(tree_a, tree_b, offsets):
    """Exact overlap test of ``(A + t)`` and ``B`` for every row ``t`` of ``offsets``.

    Both meshes must be closed; their solids (not just surfaces) count.
    """
    offsets = np.ascontiguousarray(np.atleast_2d(offsets), dtype=float)
    n = len(offsets)
    hit = np.zeros(n, dtype=bool)
    stack = [(0, 0, np.arange(n))]
    while stack:
        ia, ib, idx = stack.pop()
        idx = idx[~hit[idx]]
        if len(idx) == 0:
            continue
        t = offsets[idx]
        ok = np.all((tree_a.lo[ia] + t <= tree_b.hi[ib]) & (tree_a.hi[ia] + t >= tree_b.lo[ib]), axis=1)
        idx = idx[ok]
        if len(idx) == 0:
            continue
        leaf_a, leaf_b = tree_a.is_leaf(ia), tree_b.is_leaf(ib)
        if leaf_a and leaf_b:
            ta = tree_a.triangles[tree_a.start[ia]:tree_a.end[ia]]
            tb = tree_b.triangles[tree_b.start[ib]:tree_b.end[ib]]
            touched = triangle_pairs_touch(ta, tb, offsets[idx])
            hit[idx[touched]] = True
        elif not leaf_a and (leaf_b or (tree_a.end[ia] - tree_a.start[ia]) >= (tree_b.end[ib] - tree_b.start[ib])):
            stack.append((tree_a.right[ia], ib, idx))
            stack.append((tree_a.left[ia], ib, idx))
        else:
            stack.append((ia, tree_b.right[ib], idx))
            stack.append((ia, tree_b.left[ib], idx))

    rest = np.flatnonzero(~hit)
    if len(rest):
        t = offsets[rest]
        a_in_b = np.all((tree_a.lo[0] + t >= tree_b.lo[0]) & (tree_a.hi[0] + t <= tree_b.hi[0]), axis=1)
        b_in_a = np.all((tree_b.lo[0] >= tree_a.lo[0] + t) & (tree_b.hi[0] <= tree_a.hi[0] + t), axis=1)
        cand = rest[a_in_b]
        if len(cand):
            probe = tree_a.triangles[0, 0] + offsets[cand]
            hit[cand[np.abs(winding_number(probe, tree_b.triangles)) > 0.5]] = True
        cand = rest[b_in_a & ~hit[rest]]
        if len(cand):
            probe = tree_b.triangles[0, 0] - offsets[cand]
            hit[cand[np.abs(winding_number(probe, tree_a.triangles)) > 0.5]] = True
    return hit


def exact_collide(mesh_a, mesh_b, iso_a=None, iso_b=None):
    """True iff the placed solids of two closed meshes overlap (touching counts)."""
    ta = mesh_a.triangles if iso_a is None else iso_a.apply(mesh_a.triangles)
    tb = mesh_b.triangles if iso_b is None else iso_b.apply(mesh_b.triangles)
    tree_a, tree_b = TriangleTree.build(ta), TriangleTree.build(tb)
    return bool(collide_translations(tree_a, tree_b, np.zeros((1, 3)))[0])


# ---------------------------------------------------------------------------
# Monte Carlo oracle


@dataclass(frozen=True)
class MonteCarloResult:
    estimate: float
    std_error: float
    n_samples: int
    hits: int
    elapsed: float = 0.0


def gaussian_samples(error, n_samples, seed, first=0):
    """Samples ``first .. first + n_samples - 1`` of a counter-based normal stream.

    Sample ``i`` comes from block ``i // MC_BLOCK``, whose Philox generator is
    keyed by ``seed`` and offset by the block number, so every sample depends
    only on ``(seed, i)`` and blocks can be evaluated in any order.  Normals
    use the Box-Muller transform and are colored by the Cholesky factor.
    """
    chol = error.cholesky()
    out = np.empty((n_samples, 3))
    i = first
    stop = first + n_samples
    while i < stop:
        block = i // MC_BLOCK
        gen = np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, block]))
        u = gen.random((MC_BLOCK, 4))
        r1 = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        r2 = np.sqrt(-2.0 * np.log1p(-u[:, 2]))
        z = np.stack([r1 * np.cos(2 * math.pi * u[:, 1]),
                      r1 * np.sin(2 * math.pi * u[:, 1]),
                      r2 * np.cos(2 * math.pi * u[:, 3])], axis=1)
        lo = i - block * MC_BLOCK
        hi = min(MC_BLOCK, stop - block * MC_BLOCK)
        out[i - first:i - first + hi - lo] = z[lo:hi]
        i += hi - lo
    return error.mean + out @ chol.T


def monte_carlo_probability(mesh_a, mesh_b, error, n_samples=10_000, seed=0,
                            iso_a=None, iso_b=None, trees=None):
    """Fraction of sampled positional errors for which A collides with B.

    Parameters
    ----------
    mesh_a, mesh_b : TriMesh
        Closed meshes; the error moves ``mesh_a``.
    error : GaussianError
    n_samples : int
        At least 100.
    seed : int
    trees : tuple of TriangleTree, optional
        Prebuilt trees for the placed meshes.

    Returns
    -------
    MonteCarloResult
        ``std_error`` is the binomial standard error ``sqrt(p (1 - p) / n)``.
    """
    if n_samples < 100:
        raise ValueError("Monte Carlo needs at least 100 samples")
    start = time.perf_counter()
    if trees is None:
        ta = mesh_a.triangles if iso_a is None else iso_a.apply(mesh_a.triangles)
        tb = mesh_b.triangles if iso_b is None else iso_b.apply(mesh_b.triangles)
        trees = (TriangleTree.build(ta), TriangleTree.build(tb))
    eps = gaussian_samples(error, n_samples, seed)
    hits = int(collide_translations(trees[0], trees[1], eps).sum())
    p = hits / n_samples
    se = math.sqrt(p * (1.0 - p) / n_samples)
    return MonteCarloResult(p, se, n_samples, hits, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# distances


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def point_triangle_distance(p, tri):
    """Euclidean distance from points ``p`` (n, 3) to triangles ``tri`` (n, 3, 3)."""
    return np.linalg.norm(p - closest_points_on_triangles(p, tri), axis=1)


def segment_segment_distance(p1, q1, p2, q2):
    """Distance between segments ``[p1, q1]`` and ``[p2, q2]``, vectorized over rows."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = _dot(d1, d1), _dot(d2, d2), _dot(d2, r)
    c, b = _dot(d1, r), _dot(d1, d2)
    tiny = 1e-30
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > tiny * np.maximum(a * e, tiny), np.clip((b * f - c * e) / denom, 0, 1), 0.0)
        t = np.where(e > tiny, (b * s + f) / e, 0.0)
        s = np.where(t < 0, np.where(a > tiny, np.clip(-c / a, 0, 1), 0.0), s)
        s = np.where(t > 1, np.where(a > tiny, np.clip((b - c) / a, 0, 1), 0.0), s)
        t = np.clip(t, 0, 1)
    c1 = p1 + s[:, None] * d1
    c2 = p2 + t[:, None] * d2
    return np.linalg.norm(c1 - c2, axis=1)


def triangle_pair_distance(ta, tb, check_contact=True):
    """Distance between paired triangles ``ta[i]`` and ``tb[i]``.

    Disjoint triangles attain their distance at a vertex-face or edge-edge
    pair; intersecting ones are detected by the separating-axis slabs.
    """
    best = np.full(len(ta), np.inf)
    for k in range(3):
        best = np.minimum(best, point_triangle_distance(ta[:, k], tb))
        best = np.minimum(best, point_triangle_distance(tb[:, k], ta))
    for i in range(3):
        for j in range(3):
            best = np.minimum(best, segment_segment_distance(
                ta[:, i], ta[:, (i + 1) % 3], tb[:, j], tb[:, (j + 1) % 3]))
    if check_contact and len(ta):
        _, lo, hi = _sat_slabs(ta, tb)
        best[np.all((lo <= 0) & (hi >= 0), axis=1)] = 0.0
    return best


def _box_distance(lo_a, hi_a, lo_b, hi_b):
    gap = np.maximum(0.0, np.maximum(lo_b - hi_a, lo_a - hi_b))
    return float(np.linalg.norm(gap))


def mesh_distance(tree_a, tree_b, offset=(0.0, 0.0, 0.0)):
    """Minimum distance between the surfaces of ``A + offset`` and ``B``.

    Branch and bound over the two AABB trees, closest box pairs first.
    """
    off = np.asarray(offset, dtype=float)
    best = math.inf
    heap = [(0.0, 0, 0)]
    while heap:
        lb, ia, ib = heapq.heappop(heap)
        if lb >= best:
            break
        leaf_a, leaf_b = tree_a.is_leaf(ia), tree_b.is_leaf(ib)
        if leaf_a and leaf_b:
            ta = tree_a.triangles[tree_a.start[ia]:tree_a.end[ia]] + off
            tb = tree_b.triangles[tree_b.start[ib]:tree_b.end[ib]]
            best = min(best, float(triangle_pair_distance(*_pairs(ta, tb)).min()))
            if best == 0.0:
                return 0.0
            continue
        if not leaf_a and (leaf_b or (tree_a.end[ia] - tree_a.start[ia]) >= (tree_b.end[ib] - tree_b.start[ib])):
            kids = [(c, ib) for c in (tree_a.left[ia], tree_a.right[ia])]
        else:
            kids = [(ia, c) for c in (tree_b.left[ib], tree_b.right[ib])]
        for ja, jb in kids:
            d = _box_distance(tree_a.lo[ja] + off, tree_a.hi[ja] + off, tree_b.lo[jb], tree_b.hi[jb])
            if d < best:
                heapq.heappush(heap, (d, int(ja), int(jb)))
    return best


def placed_trees(mesh_a, mesh_b, iso_a=None, iso_b=None):
    ta = mesh_a.triangles if iso_a is None else iso_a.apply(mesh_a.triangles)
    tb = mesh_b.triangles if iso_b is None else iso_b.apply(mesh_b.triangles)
    return TriangleTree.build(ta), TriangleTree.build(tb)


__all__ = [
    "Isometry", "PcdQuery", "PcdResult", "general_pcd", "TriangleTree",
    "collide_translations", "exact_collide", "MonteCarloResult",
    "monte_carlo_probability", "gaussian_samples", "mesh_distance",
    "triangle_pair_distance", "point_triangle_distance", "segment_segment_distance",
    "winding_number", "triangle_pairs_touch", "placed_trees",
]
