"""Bounding volume hierarchies over triangle meshes.

Five bounding volume families are supported (see :class:`BVType`).  Trees
are built top-down by splitting triangle centroids at the median of their
longest AABB axis, which makes construction deterministic.  Leaves hold at
most ``leaf_capacity`` triangles and their bounding volumes act as the
convex pieces of the mesh in probability queries.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import convex as cx
from .errors import EmptyMesh

DEFAULT_LEAF_CAPACITY = 4


class BVType(str, enum.Enum):
    SPHERE = "sphere"
    AABB = "aabb"
    OBB = "obb"
    KDOP26 = "kdop26"
    CONVEX = "convex"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown bounding volume {value!r}; expected one of {names}") from None


def ritter_sphere(points):
    """Ritter's bounding sphere: a diameter guess followed by growth passes.

    The growth pass absorbs the farthest outside point each round, which
    is a vectorized variant of the classic sequential sweep.
    """
    pts = np.asarray(points, dtype=float)
    p = pts[0]
    x = pts[np.argmax(np.sum((pts - p) ** 2, axis=1))]
    y = pts[np.argmax(np.sum((pts - x) ** 2, axis=1))]
    center = 0.5 * (x + y)
    radius = 0.5 * float(np.linalg.norm(y - x))
    for _ in range(len(pts) + 1):
        dist = np.linalg.norm(pts - center, axis=1)
        k = int(np.argmax(dist))
        if dist[k] <= radius:
            break
        new_radius = 0.5 * (radius + dist[k])
        center = center + (new_radius - radius) * (pts[k] - center) / dist[k]
        radius = new_radius
    radius = max(radius, cx.inflation_pad(pts))
    # absorb the rounding error of the incremental updates
    radius = max(radius, float(np.linalg.norm(pts - center, axis=1).max())) * (1.0 + 1e-12)
    return cx.Sphere(center, radius)


def fit_aabb(points):
    pts = np.asarray(points, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = cx.inflation_pad(pts)
    flat = (hi - lo) < pad
    return cx.Aabb(np.where(flat, lo - pad, lo), np.where(flat, hi + pad, hi))


def fit_obb(points):
    """Box aligned with the principal axes of the vertex covariance."""
    pts = np.asarray(points, dtype=float)
    if len(pts) > 1:
        _, axes = np.linalg.eigh(np.cov(pts.T, bias=True))
    else:
        axes = np.eye(3)
    axes = axes[:, ::-1]
    if np.linalg.det(axes) < 0:
        axes[:, 2] = -axes[:, 2]
    local = pts @ axes
    lo, hi = local.min(axis=0), local.max(axis=0)
    half = 0.5 * (hi - lo)
    pad = cx.inflation_pad(pts)
    half = np.maximum(half, pad)
    return cx.Box(axes @ (0.5 * (lo + hi)), half, axes)


def fit_bv(points, bv_type):
    """Bounding volume of ``bv_type`` containing every point."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise cx.DegenerateShape("cannot bound an empty point set")
    bv_type = BVType.parse(bv_type)
    if bv_type is BVType.SPHERE:
        return ritter_sphere(pts)
    if bv_type is BVType.AABB:
        return fit_aabb(pts)
    if bv_type is BVType.OBB:
        return fit_obb(pts)
    if bv_type is BVType.KDOP26:
        return cx.Kdop26.from_points(pts)
    return cx.convex_hull(pts, inflate=True)


def bv_volume(bv):
    """Exact volume of a bounding volume in cubic meters."""
    return float(bv.volume)


def bv_contains(bv, points, tol=0.0):
    pts = np.asarray(points, dtype=float)
    if isinstance(bv, cx.Sphere):
        return np.linalg.norm(pts - bv.center, axis=-1) <= bv.radius + tol
    if isinstance(bv, cx.ConvexPolytope):
        offsets = np.einsum("ij,ij->i", bv.normals, bv.vertices[bv.faces[:, 0]])
        return np.all(pts @ bv.normals.T - offsets <= tol, axis=-1)
    return bv.contains(pts, tol)


@dataclass(frozen=True, eq=False)
class BvhNode:
    """One node; triangles ``order[start:end]`` of the tree lie below it."""

    bv: object
    start: int
    end: int
    left: int = -1
    right: int = -1
    volume: float = 0.0

    @property
    def is_leaf(self):
        return self.left < 0

    @property
    def size(self):
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class BvhTree:
    nodes: tuple
    mesh: object
    bv_type: BVType
    leaf_capacity: int
    order: np.ndarray

    @property
    def root(self):
        return self.nodes[0]

    def leaves(self):
        return [i for i, n in enumerate(self.nodes) if n.is_leaf]

    def depth(self):
        best = 0
        stack = [(0, 1)]
        while stack:
            i, d = stack.pop()
            best = max(best, d)
            n = self.nodes[i]
            if not n.is_leaf:
                stack += [(n.left, d + 1), (n.right, d + 1)]
        return best

    def node_points(self, index):
        n = self.nodes[index]
        return self.mesh.triangles[self.order[n.start:n.end]].reshape(-1, 3)


def build_bvh(mesh, bv_type, leaf_capacity=DEFAULT_LEAF_CAPACITY):
    """Top-down median-split hierarchy with one bounding volume per node.

    Parameters
    ----------
    mesh : TriMesh
    bv_type : BVType or str
    leaf_capacity : int
        Maximum number of triangles in a leaf.

    Raises
    ------
    EmptyMesh
        If the mesh has no triangles.
    """
    bv_type = BVType.parse(bv_type)
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be positive")
    tris = mesh.triangles
    if len(tris) == 0:
        raise EmptyMesh("cannot build a hierarchy over an empty mesh")
    centroids = tris.mean(axis=1)
    order = np.arange(len(tris))
    spans = []

    def split(start, end):
        index = len(spans)
        spans.append([start, end, -1, -1])
        if end - start > leaf_capacity:
            idx = order[start:end]
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            order[start:end] = idx[np.argsort(c[:, axis], kind="stable")]
            mid = start + (end - start) // 2
            spans[index][2] = split(start, mid)
            spans[index][3] = split(mid, end)
        return index

    split(0, len(tris))
    bvs = [None] * len(spans)
    # children precede parents in reverse preorder, so parents can merge them
    for index in range(len(spans) - 1, -1, -1):
        start, end, left, right = spans[index]
        if left < 0 or bv_type in (BVType.SPHERE, BVType.OBB):
            vids = np.unique(mesh.faces[order[start:end]])
            bvs[index] = fit_bv(mesh.vertices[vids], bv_type)
        else:
            bvs[index] = _merge_bvs(bvs[left], bvs[right], bv_type)
    nodes = [BvhNode(bvs[i], s, e, l, r, bv_volume(bvs[i]))
             for i, (s, e, l, r) in enumerate(spans)]
    return BvhTree(tuple(nodes), mesh, bv_type, int(leaf_capacity), order)


def translated_tree(tree, offset):
    """Copy of ``tree`` over the mesh moved by ``offset``; volumes are unchanged."""
    t = np.asarray(offset, dtype=float)
    nodes = tuple(BvhNode(cx.translate(n.bv, t), n.start, n.end, n.left, n.right, n.volume)
                  for n in tree.nodes)
    return BvhTree(nodes, tree.mesh.translated(t), tree.bv_type, tree.leaf_capacity, tree.order)


def _merge_bvs(a, b, bv_type):
    """Tight parent volume from two children (exact for these families)."""
    if bv_type is BVType.AABB:
        return cx.Aabb(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi))
    if bv_type is BVType.KDOP26:
        # a child's interior point stays strictly inside the wider parent slabs
        return cx.Kdop26(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi), a.interior)
    return cx.convex_hull(np.concatenate([a.vertices, b.vertices]))


def bve(mesh, tree):
    """Summed leaf bounding volume divided by the enclosed mesh volume."""
    total = sum(n.volume for n in tree.nodes if n.is_leaf)
    return total / mesh.volume


def exhaustive_pair_count(tree_a, tree_b):
    return len(tree_a.leaves()) * len(tree_b.leaves())


def depth_bound(n_triangles):
    return 2 * math.log2(max(n_triangles, 1)) + 4
