"""Triangle meshes: OBJ input, normalization and a few procedural test shapes."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .convex import icosphere
from .errors import EmptyMesh, OpenMesh, ParseError

log = logging.getLogger(__name__)

WELD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh.

    Attributes
    ----------
    vertices : array, shape (n, 3)
    faces : int array, shape (m, 3)
    name : str
    dropped_faces : int
        Zero-area faces removed while loading.
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str = "mesh"
    dropped_faces: int = 0

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) == 0 or len(v) == 0:
            raise EmptyMesh(f"{self.name}: mesh has no triangles")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.name}: non-finite vertex coordinates")
        if f.min() < 0 or f.max() >= len(v):
            raise ValueError(f"{self.name}: face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @cached_property
    def triangles(self):
        return self.vertices[self.faces]

    @property
    def n_triangles(self):
        return len(self.faces)

    @cached_property
    def signed_volume(self):
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    @property
    def volume(self):
        """Enclosed volume; raises :class:`OpenMesh` unless positive."""
        vol = self.signed_volume
        if vol <= 0.0:
            raise OpenMesh(f"{self.name}: signed volume {vol:g} is not positive")
        return vol

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, isometry):
        return TriMesh(isometry.apply(self.vertices), self.faces, self.name)

    def translated(self, t):
        return TriMesh(self.vertices + np.asarray(t, dtype=float), self.faces, self.name)

    def rotated(self, rotation):
        return TriMesh(self.vertices @ np.asarray(rotation).T, self.faces, self.name)

    def normalized(self):
        """Scaled so the longest AABB edge is 1 and centered at the AABB center."""
        lo, hi = self.bounds()
        longest = float((hi - lo).max())
        if longest <= 0.0:
            raise EmptyMesh(f"{self.name}: mesh has zero extent")
        v = (self.vertices - 0.5 * (lo + hi)) / longest
        return TriMesh(v, self.faces, self.name, self.dropped_faces)


def _parse_index(token, n_vertices, lineno, path):
    head = token.split("/")[0]
    try:
        idx = int(head)
    except ValueError:
        raise ParseError(f"bad face index {token!r}", lineno, path) from None
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += n_vertices
    else:
        raise ParseError("face index 0 is invalid in OBJ", lineno, path)
    if not 0 <= idx < n_vertices:
        raise ParseError(f"face index {token!r} out of range", lineno, path)
    return idx


def parse_obj(text, path=None):
    """Vertices and triangulated faces from Wavefront OBJ text.

    Only ``v`` and ``f`` records are interpreted; polygons are fan
    triangulated.  Normals, texture coordinates and groups are ignored.
    """
    verts = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError("vertex needs 3 coordinates", lineno, path)
            try:
                xyz = [float(p) for p in parts[1:4]]
            except ValueError:
                raise ParseError(f"bad vertex coordinates {line!r}", lineno, path) from None
            if not all(np.isfinite(xyz)):
                raise ParseError("non-finite vertex coordinate", lineno, path)
            verts.append(xyz)
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError("face needs at least 3 vertices", lineno, path)
            idx = [_parse_index(p, len(verts), lineno, path) for p in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def weld(vertices, faces, tol=WELD_TOL):
    """Merge vertices closer than ``tol`` (grid snapping) and drop degenerate faces.

    Returns the new vertices, faces and the number of faces dropped.
    """
    if len(vertices) == 0:
        return vertices, faces, 0
    keys = np.round(vertices / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_vertices = vertices[first[order]]
    new_faces = rank[inverse[faces]] if len(faces) else faces
    if len(new_faces):
        t = new_vertices[new_faces]
        area2 = np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
        scale = max(float(np.ptp(new_vertices, axis=0).max()), tol)
        ok = area2 > (1e-12 * scale) ** 2
        dropped = int((~ok).sum())
        new_faces = new_faces[ok]
    else:
        dropped = 0
    return new_vertices, new_faces, dropped


def load_mesh(path):
    """Read a Wavefront OBJ file into a welded :class:`TriMesh`.

    Raises
    ------
    ParseError
        On malformed records, naming the offending line.
    EmptyMesh
        If no usable triangle remains.
    """
    path = Path(path)
    text = path.read_text()
    verts, faces = parse_obj(text, path=str(path))
    if len(faces) == 0:
        raise EmptyMesh(f"{path}: no faces")
    verts, faces, dropped = weld(verts, faces)
    if dropped:
        log.warning("%s: dropped %d zero-area triangles", path, dropped)
    if len(faces) == 0:
        raise EmptyMesh(f"{path}: all faces are degenerate")
    return TriMesh(verts, faces, path.stem, dropped)


def write_obj(mesh, path):
    lines = [f"# {mesh.name}"]
    lines += [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# procedural shapes


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), name="box"):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    corners = np.array([[hi[i] if (k >> i) & 1 else lo[i] for i in range(3)] for k in range(8)])
    faces = [(0, 2, 1), (1, 2, 3), (4, 5, 6), (5, 7, 6),
             (0, 1, 4), (1, 5, 4), (2, 6, 3), (3, 6, 7),
             (0, 4, 2), (2, 4, 6), (1, 3, 5), (3, 7, 5)]
    return TriMesh(corners, faces, name)


def sphere_mesh(radius=1.0, level=3, name="sphere"):
    v, f = icosphere(level)
    return TriMesh(v * radius, f, name)


def bunny_like_mesh(level=4, name="blob"):
    """Watertight, non-convex, star-shaped test body (5120 triangles at level 4).

    A squashed ellipsoid carrying a head lobe, two long ear lobes and a
    tail, with a low-amplitude ripple so that no large region is flat.
    The radial profile is deterministic, so the mesh is reproducible.
    """
    u, f = icosphere(level)
    x, y, z = u.T
    base = 1.0 / np.sqrt((x / 1.0) ** 2 + (y / 0.75) ** 2 + (z / 0.8) ** 2)

    def lobe(direction, height, width):
        d = np.asarray(direction, dtype=float)
        d /= np.linalg.norm(d)
        return height * np.exp((u @ d - 1.0) / width)

    r = base * (1.0
                + lobe((0.9, 0.0, 0.45), 0.45, 0.05)      # head
                + lobe((0.55, 0.25, 1.0), 0.85, 0.006)    # ear
                + lobe((0.55, -0.25, 1.0), 0.80, 0.006)   # ear
                + lobe((-1.0, 0.0, 0.2), 0.18, 0.02)      # tail
                - lobe((0.0, 0.0, -1.0), 0.25, 0.15)      # flat belly
                + 0.04 * np.sin(5 * x) * np.sin(4 * y + 1.0) * np.cos(3 * z))
    return TriMesh(u * r[:, None], f, name).normalized()


def builtin_mesh(spec):
    """Resolve ``builtin:<name>`` mesh identifiers used by the CLI and configs."""
    name = spec.split(":", 1)[1] if spec.startswith("builtin:") else spec
    if name in ("bunny", "blob", "bunny_like"):
        return bunny_like_mesh(name="bunny_like")
    if name == "cube":
        return box_mesh((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), name="cube")
    if name == "sphere":
        return sphere_mesh(0.5, name="sphere")
    raise ValueError(f"unknown builtin mesh {name!r}")


def resolve_mesh(spec):
    if str(spec).startswith("builtin:"):
        return builtin_mesh(str(spec))
    return load_mesh(spec)
