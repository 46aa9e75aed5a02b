"""Convex primitives: shapes, support mappings, hulls, GJK and Minkowski sums.

Shapes are immutable value objects holding ``numpy`` arrays:

* :class:`ConvexPolytope` -- vertices plus an outward-oriented triangulated
  boundary.
* :class:`Sphere`, :class:`Aabb`, :class:`Box` (oriented box) and
  :class:`Zonotope` (sum of segments; a box after a linear map becomes a
  three-generator zonotope, i.e. a parallelepiped).
* :class:`Kdop26` -- slab representation over 13 fixed axes (26 planes).

Every shape provides ``support(direction)``; :func:`to_polytope` converts any
of them into a :class:`ConvexPolytope` when an explicit boundary is needed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import ConvexHull, HalfspaceIntersection
from scipy.spatial import QhullError

from .errors import DegenerateInput, DegenerateShape, NonConvergence, SingularTransform

INFLATE_REL = 1e-7
PARALLEL_ANGLE = 1e-6
# 1 - cos of the largest angle between normals still treated as one plane
COPLANAR_TOL = 1e-12
GJK_MAX_ITER = 128
GJK_REL_TOL = 1e-9


def _kdop_axes():
    axes = [(1, 0, 0), (0, 1, 0), (0, 0, 1),
            (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1),
            (1, 1, 1), (1, 1, -1), (1, -1, 1), (-1, 1, 1)]
    a = np.array(axes, dtype=float)
    return a / np.linalg.norm(a, axis=1, keepdims=True)


#: The 13 slab axes of a 26-DOP; each axis contributes the planes +d and -d.
KDOP_AXES = _kdop_axes()


def _diameter(points):
    if len(points) == 0:
        return 0.0
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def inflation_pad(points, rel=INFLATE_REL):
    """Thickness added to degenerate fits; a lone point uses its coordinate scale."""
    diam = _diameter(points)
    if diam > 0:
        return rel * diam
    return rel * max(1.0, float(np.abs(points).max(initial=0.0)))


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """Convex polytope with an outward, counter-clockwise triangulated boundary.

    Attributes
    ----------
    vertices : array, shape (n, 3)
    faces : int array, shape (m, 3)
        Vertex indices; ``(v1 - v0) x (v2 - v0)`` points outward.
    normals : array, shape (m, 3)
        Unit outward normals, one per face.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray

    @cached_property
    def triangles(self):
        return self.vertices[self.faces]

    @cached_property
    def areas(self):
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    @cached_property
    def volume(self):
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    @cached_property
    def centroid(self):
        return self.vertices.mean(axis=0)

    @property
    def diameter(self):
        return _diameter(self.vertices)

    def support(self, direction):
        if len(self.vertices) == 0:
            raise DegenerateShape("polytope has no vertices")
        return self.vertices[int(np.argmax(self.vertices @ direction))]

    def translated(self, t):
        return ConvexPolytope(self.vertices + t, self.faces, self.normals)

    def negated(self):
        # point reflection flips orientation, so swap two indices to stay outward
        return ConvexPolytope(-self.vertices, self.faces[:, [0, 2, 1]], -self.normals)

    @cached_property
    def polygon_edges(self):
        """Boundary loops of the planar faces formed by merging coplanar triangles.

        Returns
        -------
        edges : int array, shape (k, 2)
            Directed edges, counter-clockwise seen from outside.
        label : int array, shape (k,)
            Polygon index of each edge.
        normals : array, shape (p, 3)
            Unit outward normal of each polygon.
        """
        m = len(self.faces)
        nv = len(self.vertices)
        e = self.edges()
        owner = np.arange(3 * m) % m
        keys = e[:, 0] * nv + e[:, 1]
        order = np.argsort(keys)
        pos = np.searchsorted(keys[order], e[:, 1] * nv + e[:, 0])
        pos = np.minimum(pos, len(order) - 1)
        twin = order[pos]
        has_twin = keys[twin] == e[:, 1] * nv + e[:, 0]
        twin_face = np.where(has_twin, owner[twin], owner)
        dots = np.einsum("ij,ij->i", self.normals[owner], self.normals[twin_face])
        same = has_twin & (1.0 - dots <= COPLANAR_TOL)
        graph = sparse.coo_matrix((np.ones(int(same.sum())), (owner[same], twin_face[same])),
                                  shape=(m, m))
        n_poly, face_label = csgraph.connected_components(graph, directed=False)
        boundary = face_label[owner] != face_label[twin_face]
        boundary |= ~has_twin
        weights = self.areas[:, None] * self.normals
        poly_n = np.zeros((n_poly, 3))
        np.add.at(poly_n, face_label, weights)
        norm = np.linalg.norm(poly_n, axis=1, keepdims=True)
        # zero-area polygons keep their first face normal
        first = np.full(n_poly, -1)
        first[face_label[::-1]] = np.arange(m)[::-1]
        poly_n = np.where(norm > 0, poly_n / np.where(norm > 0, norm, 1.0), self.normals[first])
        return e[boundary], face_label[owner[boundary]], poly_n

    def edges(self):
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return e

    def check_invariants(self, tol=1e-9):
        """Raise ``AssertionError`` if the polytope is not a closed convex 2-manifold."""
        directed = self.edges()
        keys = set(map(tuple, directed.tolist()))
        assert len(keys) == len(directed), "duplicate directed edge"
        for a, b in keys:
            assert (b, a) in keys, f"edge {(a, b)} has no opposite twin"
        n_edges = len(directed) // 2
        n_used = len(np.unique(self.faces))
        assert n_used - n_edges + len(self.faces) == 2, "Euler characteristic != 2"
        scale = max(self.diameter, 1e-300)
        assert np.allclose(np.linalg.norm(self.normals, axis=1), 1.0, atol=1e-9)
        offsets = np.einsum("ij,ij->i", self.normals, self.vertices[self.faces[:, 0]])
        signed = self.vertices @ self.normals.T - offsets
        assert signed.max() <= tol * scale, f"non-convex: {signed.max()}"


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def support(self, direction):
        d = np.asarray(direction, dtype=float)
        return self.center + self.radius * d / np.linalg.norm(d)

    @property
    def volume(self):
        return 4.0 / 3.0 * np.pi * self.radius**3

    def translated(self, t):
        return Sphere(self.center + t, self.radius)

    def negated(self):
        return Sphere(-self.center, self.radius)


@dataclass(frozen=True, eq=False)
class Zonotope:
    """Minkowski sum of segments ``[-g, g]`` translated to ``center``."""

    center: np.ndarray
    generators: np.ndarray

    def support(self, direction):
        s = np.sign(self.generators @ direction)
        return self.center + s @ self.generators

    def translated(self, t):
        return Zonotope(self.center + t, self.generators)

    def negated(self):
        return Zonotope(-self.center, self.generators)

    @property
    def volume(self):
        g = self.generators
        if len(g) < 3:
            return 0.0
        return 8.0 * sum(abs(np.linalg.det(g[list(c)])) for c in itertools.combinations(range(len(g)), 3))


@dataclass(frozen=True, eq=False)
class Box:
    """Oriented box; ``axes`` holds the unit box axes as columns."""

    center: np.ndarray
    half_extents: np.ndarray
    axes: np.ndarray

    @property
    def generators(self):
        return (self.axes * self.half_extents).T

    def to_zonotope(self):
        return Zonotope(self.center, self.generators)

    def support(self, direction):
        return self.to_zonotope().support(direction)

    @property
    def volume(self):
        return float(8.0 * np.prod(self.half_extents))

    def corners(self):
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
        return self.center + signs @ self.generators

    def contains(self, points, tol=0.0):
        local = (np.asarray(points) - self.center) @ self.axes
        return np.all(np.abs(local) <= self.half_extents + tol, axis=-1)

    def translated(self, t):
        return Box(self.center + t, self.half_extents, self.axes)

    def negated(self):
        return Box(-self.center, self.half_extents, self.axes)


@dataclass(frozen=True, eq=False)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def to_box(self):
        return Box(0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo), np.eye(3))

    def support(self, direction):
        return np.where(np.asarray(direction) >= 0, self.hi, self.lo)

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def contains(self, points, tol=0.0):
        p = np.asarray(points)
        return np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=-1)

    def translated(self, t):
        return Aabb(self.lo + t, self.hi + t)

    def negated(self):
        return Aabb(-self.hi, -self.lo)


@dataclass(frozen=True, eq=False)
class Kdop26:
    """26-DOP: ``lo[i] <= KDOP_AXES[i] . x <= hi[i]`` for the 13 axes.

    ``interior`` is a point strictly inside the slabs; it seeds the
    half-space intersection that produces the polytope form.
    """

    lo: np.ndarray
    hi: np.ndarray
    interior: np.ndarray

    @classmethod
    def from_points(cls, points):
        pts = np.asarray(points, dtype=float)
        if len(pts) == 0:
            raise DegenerateShape("cannot fit a k-DOP to zero points")
        proj = pts @ KDOP_AXES.T
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        center = pts.mean(axis=0)
        pad = inflation_pad(pts)
        slack = np.minimum(KDOP_AXES @ center - lo, hi - KDOP_AXES @ center)
        if slack.min() <= pad:
            # flat or near-flat point set; widen every slab so the interior is open
            lo, hi = lo - pad, hi + pad
        return cls(lo, hi, center)

    def translated(self, t):
        shift = KDOP_AXES @ t
        return Kdop26(self.lo + shift, self.hi + shift, self.interior + t)

    def negated(self):
        return Kdop26(-self.hi, -self.lo, -self.interior)

    @property
    def intervals(self):
        return np.stack([self.lo, self.hi], axis=1)

    @cached_property
    def polytope(self):
        return kdop_to_polytope(self)

    def support(self, direction):
        return self.polytope.support(direction)

    @property
    def volume(self):
        return self.polytope.volume

    def contains(self, points, tol=0.0):
        proj = np.asarray(points) @ KDOP_AXES.T
        return np.all((proj >= self.lo - tol) & (proj <= self.hi + tol), axis=-1)


def support(shape, direction):
    """Point of ``shape`` maximizing its dot product with ``direction``."""
    d = np.asarray(direction, dtype=float)
    if not np.any(d):
        raise ValueError("support direction must be nonzero")
    return shape.support(d)


# ---------------------------------------------------------------------------
# hulls


def inflate_degenerate(points, rel=INFLATE_REL):
    """Thicken a coplanar or collinear point set along its missing axes.

    Each degenerate principal axis ``u`` receives copies ``p + e u`` and
    ``p - e u`` with ``e = rel * diameter``, so the result spans 3D and still
    contains the original set.  Non-degenerate input is returned unchanged.
    """
    pts = np.asarray(points, dtype=float)
    eps = inflation_pad(pts, rel)
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=True)
    proj = centered @ vt.T
    extent = proj.max(axis=0) - proj.min(axis=0)
    out = pts
    for k in range(3):
        if extent[k] < eps:
            u = vt[k]
            out = np.concatenate([out + eps * u, out - eps * u])
    return out


def convex_hull(points, inflate=False):
    """Convex hull of at least four affinely independent points.

    Parameters
    ----------
    points : array, shape (n, 3)
    inflate : bool
        Thicken degenerate (flat) input by :func:`inflate_degenerate` instead
        of raising.

    Raises
    ------
    DegenerateInput
        If the points do not span 3D and ``inflate`` is false.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if len(pts) == 0:
        raise DegenerateShape("no points")
    if inflate:
        pts = inflate_degenerate(pts)
    if len(pts) < 4:
        raise DegenerateInput("need at least 4 points for a 3D hull")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInput(f"points do not span 3D: {exc.args[0].splitlines()[0]}") from None
    return _polytope_from_qhull(pts, hull)


def _polytope_from_qhull(pts, hull):
    simplices = hull.simplices
    normals = hull.equations[:, :3]
    used = np.unique(simplices)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    faces = remap[simplices]
    verts = pts[used]
    tri = verts[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", cross, normals) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return ConvexPolytope(verts, faces, normals)


def _polytope_from_faces(vertices, faces):
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    tri = vertices[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(cross, axis=1, keepdims=True)
    return ConvexPolytope(vertices, faces, cross / norm)


def kdop_to_polytope(kdop):
    """Vertex/face form of a 26-DOP by half-space intersection."""
    halfspaces = np.concatenate([
        np.hstack([KDOP_AXES, -kdop.hi[:, None]]),
        np.hstack([-KDOP_AXES, kdop.lo[:, None]]),
    ])
    interior = np.asarray(kdop.interior, dtype=float)
    slack = np.minimum(KDOP_AXES @ interior - kdop.lo, kdop.hi - KDOP_AXES @ interior)
    if slack.min() <= 0:
        raise DegenerateShape("k-DOP interior point is not strictly inside")
    try:
        hs = HalfspaceIntersection(halfspaces, interior)
    except QhullError as exc:
        raise DegenerateShape(f"k-DOP has empty interior: {exc.args[0].splitlines()[0]}") from None
    pts = hs.intersections
    scale = max(_diameter(pts), 1e-300)
    pts = np.unique(np.round(pts / scale, 12), axis=0) * scale
    return convex_hull(pts)


def icosphere(level=2):
    """Unit-radius geodesic sphere vertices and outward faces."""
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(level):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = v[i] + v[j]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(v), np.array(faces, dtype=np.int64)


def sphere_to_polytope(sphere, level=2):
    """Icosphere scaled so its faces lie outside the sphere (circumscribed)."""
    v, f = icosphere(level)
    tri = v[f]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    inradius = np.einsum("ij,ij->i", n, tri[:, 0]).min()
    scale = sphere.radius / inradius * (1.0 + 1e-12)
    return _polytope_from_faces(sphere.center + v * scale, f)


def zonotope_polytope(center, generators):
    """Boundary of the zonotope ``center + sum_k [-g_k, g_k]``.

    Near-parallel generators are merged first.  With no three generators
    coplanar, every pair ``(i, j)`` spans two parallelogram faces (normal
    ``+-g_i x g_j``), each split into two triangles.  Coplanar triples make
    faces non-parallelogram polygons; that case falls back to the hull of
    the ``2^m`` corner sums.
    """
    center = np.asarray(center, dtype=float)
    gens = _merge_generators(np.asarray(generators, dtype=float))
    m = len(gens)
    if m < 3 or np.linalg.matrix_rank(gens, tol=1e-12 * np.abs(gens).max()) < 3:
        raise DegenerateInput("zonotope generators do not span 3D")
    ii, jj = np.triu_indices(m, 1)
    normals = np.cross(gens[ii], gens[jj])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    proj = normals @ gens.T
    lengths = np.linalg.norm(gens, axis=1)
    flat = np.abs(proj) <= 1e-9 * lengths
    rows = np.arange(len(ii))
    flat[rows, ii] = False
    flat[rows, jj] = False
    if flat.any():
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=m)))
        return convex_hull(center + signs @ gens)

    side = np.sign(proj)
    # keys[s, pair, corner, generator]: sign of each generator at a face corner
    keys = np.stack([side, -side])[:, :, None, :].repeat(4, axis=2)
    corner_i = np.array([-1.0, 1.0, 1.0, -1.0])
    corner_j = np.array([-1.0, -1.0, 1.0, 1.0])
    keys[:, rows, :, ii] = corner_i
    keys[:, rows, :, jj] = corner_j
    keys[1] = keys[1, :, ::-1]
    flat_keys = keys.reshape(-1, m)
    codes = (flat_keys > 0) @ (1 << np.arange(m))
    uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    verts = center + flat_keys[first] @ gens
    quads = inverse.reshape(-1, 4)
    faces = np.concatenate([quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]])
    return _polytope_from_faces(verts, faces)


def _merge_generators(gens):
    if len(gens) == 0:
        return gens.reshape(0, 3)
    norms = np.linalg.norm(gens, axis=1)
    live = norms > 1e-14 * np.abs(gens).max()
    gens, norms = gens[live], norms[live]
    sines = np.linalg.norm(np.cross(gens[:, None, :], gens[None, :, :]), axis=2)
    parallel = sines <= np.sin(PARALLEL_ANGLE) * np.outer(norms, norms)
    dots = gens @ gens.T
    kept, owner = [], np.full(len(gens), -1)
    for k in range(len(gens)):
        match = [o for o in kept if parallel[k, o]]
        if match:
            owner[k] = match[0]
        else:
            kept.append(k)
            owner[k] = k
    out = []
    for o in kept:
        members = np.flatnonzero(owner == o)
        out.append((np.sign(dots[o, members])[:, None] * gens[members]).sum(axis=0))
    return np.array(out).reshape(-1, 3)


# ---------------------------------------------------------------------------
# conversions and transforms


def as_zonotope(shape):
    if isinstance(shape, Zonotope):
        return shape
    if isinstance(shape, Box):
        return shape.to_zonotope()
    if isinstance(shape, Aabb):
        return shape.to_box().to_zonotope()
    raise TypeError(f"{type(shape).__name__} is not box-like")


def to_polytope(shape):
    """Explicit boundary representation of any supported convex shape."""
    if isinstance(shape, ConvexPolytope):
        return shape
    if isinstance(shape, Kdop26):
        return shape.polytope
    if isinstance(shape, Sphere):
        return sphere_to_polytope(shape)
    if isinstance(shape, (Box, Aabb, Zonotope)):
        z = as_zonotope(shape)
        return zonotope_polytope(z.center, z.generators)
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def translate(shape, t):
    return shape.translated(np.asarray(t, dtype=float))


def negate(shape):
    """Point reflection ``-S`` about the origin."""
    return shape.negated()


def apply_linear(shape, transform):
    """Image of ``shape`` under ``x -> transform @ x``.

    Polytopes keep their connectivity (winding flipped for reflections);
    box-like shapes map to zonotopes; k-DOPs and spheres are not closed under
    general linear maps and are converted to polytopes first.
    """
    t = np.asarray(transform, dtype=float)
    det = np.linalg.det(t)
    if not np.isfinite(det) or abs(det) <= 1e-300 or np.linalg.cond(t) > 1e14:
        raise SingularTransform("linear map is singular")
    if isinstance(shape, (Box, Aabb, Zonotope)):
        z = as_zonotope(shape)
        return Zonotope(t @ z.center, z.generators @ t.T)
    poly = to_polytope(shape)
    faces = poly.faces if det > 0 else poly.faces[:, [0, 2, 1]]
    return _polytope_from_faces(poly.vertices @ t.T, faces)


# ---------------------------------------------------------------------------
# Minkowski sums


def minkowski_sum_general(a_negated, b):
    """Hull of all pairwise vertex sums of two polytopes.

    The caller negates A beforehand, so the result is ``(-A) + B``.
    """
    pa = to_polytope(a_negated).vertices
    pb = to_polytope(b).vertices
    sums = (pa[:, None, :] + pb[None, :, :]).reshape(-1, 3)
    return convex_hull(sums)


def minkowski_sum_kdop(a, b):
    """Slab-wise interval sum of two 26-DOPs, linear in the number of slabs."""
    return Kdop26(a.lo + b.lo, a.hi + b.hi, a.interior + b.interior)


def minkowski_sum_boxes(a, b):
    """Sum of two boxes or parallelepipeds as a (up to) six-generator zonotope."""
    za, zb = as_zonotope(a), as_zonotope(b)
    return zonotope_polytope(za.center + zb.center,
                             np.concatenate([za.generators, zb.generators]))


# ---------------------------------------------------------------------------
# closest points


def closest_points_on_triangles(p, tri):
    """Closest point of triangle ``tri[i]`` to point ``p[i]``, vectorized over rows.

    Region-based (vertex, edge or face Voronoi region) computation.
    """
    p = np.broadcast_to(np.asarray(p, dtype=float), (len(tri), 3))
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1, d2 = _rowdot(ab, ap), _rowdot(ac, ap)
    d3, d4 = _rowdot(ab, bp), _rowdot(ac, bp)
    d5, d6 = _rowdot(ab, cp), _rowdot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        closest = a + (vb / denom)[:, None] * ab + (vc / denom)[:, None] * ac
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    cases = [
        ((d1 <= 0) & (d2 <= 0), a),
        ((d3 >= 0) & (d4 <= d3), b),
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab),
        ((d6 >= 0) & (d5 <= d6), c),
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac),
        ((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + t_bc[:, None] * (c - b)),
    ]
    done = np.zeros(len(tri), dtype=bool)
    for mask, q in cases:
        m = mask & ~done
        closest = np.where(m[:, None], q, closest)
        done |= m
    return closest


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


def closest_to_origin(poly, rel_tol=1e-13):
    """Point of a convex polytope nearest the origin.

    Returns ``(point, contains)``; ``contains`` is true when the origin lies
    inside or on the boundary (within ``rel_tol`` of the polytope scale),
    in which case the point is the origin.
    """
    tri = poly.triangles
    scale = max(float(np.abs(poly.vertices).max()), 1e-300)
    offsets = _rowdot(poly.normals, tri[:, 0])
    if offsets.min() >= -rel_tol * scale:
        return np.zeros(3), True
    q = closest_points_on_triangles(np.zeros(3), tri)
    dist = _rowdot(q, q)
    k = int(np.argmin(dist))
    if dist[k] <= (rel_tol * scale) ** 2:
        return np.zeros(3), True
    return q[k], False


# ---------------------------------------------------------------------------
# GJK


@dataclass(frozen=True)
class GjkResult:
    """Outcome of :func:`gjk_distance`.

    ``displacement`` is the shortest vector from ``a`` to ``b``: translating
    ``a`` by it makes the shapes touch.
    """

    displacement: np.ndarray
    distance: float
    intersecting: bool
    iterations: int = 0


_SUBSETS = {
    k: [c for r in range(k, 0, -1) for c in itertools.combinations(range(k), r)]
    for k in range(1, 5)
}


def _closest_on_simplex(pts):
    """Closest point to the origin on the hull of 1-4 points.

    Returns the point, the indices of the minimal supporting subset, and
    whether the origin lies inside a full tetrahedron.
    """
    k = len(pts)
    if k == 4:
        e = (pts[1:] - pts[0]).T
        try:
            mu = np.linalg.solve(e, -pts[0])
            lam = np.concatenate([[1.0 - mu.sum()], mu])
            if np.all(lam >= 0.0):
                return np.zeros(3), (0, 1, 2, 3), True
        except np.linalg.LinAlgError:
            pass
    best = None
    for sub in _SUBSETS[k]:
        p = pts[list(sub)]
        if len(sub) == 1:
            x = p[0]
        else:
            e = p[1:] - p[0]
            gram = e @ e.T
            rhs = -e @ p[0]
            if np.linalg.cond(gram) > 1e14:
                continue
            mu = np.linalg.solve(gram, rhs)
            if mu.min() <= 0.0 or mu.sum() >= 1.0:
                continue
            x = p[0] + mu @ e
        d = x @ x
        if best is None or d < best[0]:
            best = (d, x, sub)
    return best[1], best[2], False


def gjk_distance(a, b, max_iter=GJK_MAX_ITER, rel_tol=GJK_REL_TOL):
    """Minimum distance and separating displacement between convex shapes.

    Runs Gilbert-Johnson-Keerthi iterations on the Minkowski difference
    ``B - A`` using the shapes' support mappings.

    Raises
    ------
    NonConvergence
        If the support gap has not closed after ``max_iter`` iterations.
    """

    def diff_support(d):
        return b.support(d) - a.support(-d)

    v = diff_support(np.array([1.0, 0.0, 0.0]))
    simplex = [v]
    scale = max(float(np.linalg.norm(v)), 1e-300)
    for it in range(1, max_iter + 1):
        pts = np.array(simplex)
        v, sub, inside = _closest_on_simplex(pts)
        scale = max(scale, float(np.abs(pts).max()))
        vv = float(v @ v)
        if inside or vv <= (1e-13 * scale) ** 2:
            return GjkResult(np.zeros(3), 0.0, True, it)
        simplex = [simplex[i] for i in sub]
        w = diff_support(-v)
        if vv - float(v @ w) <= rel_tol * vv:
            return GjkResult(v, float(np.sqrt(vv)), False, it)
        if any(np.array_equal(w, s) for s in simplex):
            return GjkResult(v, float(np.sqrt(vv)), False, it)
        simplex.append(w)
    raise NonConvergence(f"GJK did not converge in {max_iter} iterations")
