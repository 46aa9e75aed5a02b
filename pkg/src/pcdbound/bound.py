"""Upper bounds on the collision probability of a convex pair.

The guaranteed bound (:func:`convex_pcd`) whitens the configuration so the
positional error becomes a standard normal, replaces the 3D density by a 1D
Gaussian along the GJK separation direction ``n_d`` (never smaller, by
Cauchy-Schwarz), and integrates that relaxed density over the Minkowski sum
``V' = (-A') + B'`` through the divergence theorem.  The vector field

    F(x) = (1 / 4 pi) (1 + erf(x . n_d / sqrt 2)) n_d

has divergence equal to the relaxed density, so the volume integral turns
into a flux through the triangles of ``V'``.  Each triangle contributes at
most ``max_j F(S_j) . n_i * area``, which keeps the result an upper bound.

Two sphere-only baselines are provided for comparison: the density at the
center of the Minkowski ball times its volume (not a bound), and the
maximum density over the ball times its volume (a bound).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import convex as cx
from .errors import NonConvergence
from .geometry import GaussianError

INV_4PI = 1.0 / (4.0 * math.pi)
RELAXED_PEAK = (8.0 * math.pi**3) ** -0.5
MIN_TRIANGLE_AREA = 1e-14
SPHERE_BISECTION_STEPS = 200


class Method(str, enum.Enum):
    CONVEX_DIVERGENCE = "ConvexDivergence"
    SPHERE_MAX = "SphereMax"
    SPHERE_CENTER = "SphereCenter"
    EXACT1 = "Exact1"
    MONTE_CARLO_REF = "MonteCarloRef"


@dataclass(frozen=True)
class CollisionBound:
    probability_upper: float
    displacement_whitened: np.ndarray
    method: Method

    def __post_init__(self):
        if not 0.0 <= self.probability_upper <= 1.0:
            raise ValueError(f"probability {self.probability_upper} outside [0, 1]")


def field_f(x, n_d):
    """Vector field whose divergence is the relaxed density.

    ``x`` may be one point or an ``(n, 3)`` array; ``n_d`` is a unit vector.
    """
    n_d = np.asarray(n_d, dtype=float)
    t = np.asarray(x, dtype=float) @ n_d
    scale = INV_4PI * (1.0 + special.erf(t / math.sqrt(2.0)))
    return np.multiply.outer(scale, n_d)


def relaxed_density(x, n_d):
    t = np.asarray(x, dtype=float) @ np.asarray(n_d, dtype=float)
    return RELAXED_PEAK * np.exp(-0.5 * t * t)


def surface_integral_upper(v_prime, n_d):
    """Per-triangle-max flux of :func:`field_f` through the boundary of ``v_prime``.

    Coplanar triangles are merged into polygons and each polygon is fanned
    from its vertex of least flux, so the result depends only on the shape
    of ``v_prime`` and not on how the hull happened to be triangulated.

    Adding a constant field to ``F`` leaves the divergence and the flux
    through any closed surface unchanged, and shifts every triangle's
    maximum by the same per-triangle constant, so the sum is identical.
    The shifted field ``F - (1/2pi) n_d = -(1/4pi) erfc(t/sqrt 2) n_d`` is
    used when ``v_prime`` lies mostly on the positive side of ``n_d``: it
    is tiny there and avoids cancellation between large inflow and outflow
    terms.  The result is clamped to ``[0, 1]``.
    """
    n_d = np.asarray(n_d, dtype=float)
    verts = v_prime.vertices
    edges, label, poly_n = v_prime.polygon_edges
    t = verts @ n_d
    if np.mean(t) >= 0.0:
        mag = -INV_4PI * special.erfc(t / math.sqrt(2.0))
    else:
        mag = INV_4PI * special.erfc(-t / math.sqrt(2.0))
    cos = poly_n @ n_d
    val_a = mag[edges[:, 0]] * cos[label]
    # least-flux boundary vertex of every polygon is the fan apex
    order = np.lexsort((val_a, label))
    first = np.ones(len(order), dtype=bool)
    first[1:] = label[order][1:] != label[order][:-1]
    apex = np.empty(len(poly_n), dtype=np.int64)
    apex[label[order][first]] = edges[order][first, 0]
    ap = apex[label]
    fan = (edges[:, 0] != ap) & (edges[:, 1] != ap)
    e, lab, ap = edges[fan], label[fan], ap[fan]
    p0 = verts[ap]
    cross = np.cross(verts[e[:, 0]] - p0, verts[e[:, 1]] - p0)
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    keep = areas >= MIN_TRIANGLE_AREA
    e, lab, ap, areas = e[keep], lab[keep], ap[keep], areas[keep]
    c = cos[lab]
    flux = np.maximum(np.maximum(mag[ap] * c, mag[e[:, 0]] * c), mag[e[:, 1]] * c)
    total = float(np.dot(flux, areas))
    return min(max(total, 0.0), 1.0)


def _whiten(shape, transform):
    if isinstance(shape, cx.Sphere):
        shape = cx.sphere_to_polytope(shape)
    return cx.apply_linear(shape, transform)


def _is_boxlike(shape):
    return isinstance(shape, (cx.Box, cx.Aabb, cx.Zonotope))


class PreparedShape:
    """A shape together with its lazily computed whitened forms.

    ``shape`` is the input, ``shifted`` the input after the mean shift (only
    for the moving object A).  Hierarchy queries prepare each node once and
    reuse it for every pair the node takes part in.
    """

    __slots__ = ("shape", "shifted", "transform", "_whitened", "_negated")

    def __init__(self, shape, error, moving):
        self.shape = shape
        self.shifted = cx.translate(shape, error.mean) if moving else shape
        self.transform = error.whitening()
        self._whitened = None
        self._negated = None

    @property
    def whitened(self):
        if self._whitened is None:
            self._whitened = _whiten(self.shifted, self.transform)
        return self._whitened

    @property
    def negated_whitened(self):
        if self._negated is None:
            w = self.whitened
            self._negated = w.negated() if _is_boxlike(w) else cx.to_polytope(w).negated()
        return self._negated


def convex_pcd(a, b, error, sphere_method="max"):
    """Guaranteed upper bound on ``P((A + eps) meets B)``, ``eps ~ error``.

    Parameters
    ----------
    a, b : convex shape
        Any of ``ConvexPolytope``, ``Kdop26``, ``Box``, ``Aabb``,
        ``Zonotope`` or ``Sphere``.  The positional error moves ``a``.
    error : GaussianError
    sphere_method : {"max", "tessellated"}
        How a sphere-sphere pair is bounded: the maximal-density baseline,
        or the surface bound over circumscribed icospheres.

    Returns
    -------
    CollisionBound
        ``probability_upper == 1`` when the whitened shapes overlap at the
        mean, since no separating direction exists there.
    """
    return prepared_pcd(PreparedShape(a, error, True), PreparedShape(b, error, False),
                        error, sphere_method)


def minkowski_difference(pa, pb):
    """Whitened ``V' = (-A') + B'`` by the cheapest exact or conservative path."""
    a, b = pa.shifted, pb.shape
    if isinstance(a, cx.Kdop26) and isinstance(b, cx.Kdop26):
        # slab sums commute with the linear map, so sum before whitening
        return cx.apply_linear(cx.minkowski_sum_kdop(a.negated(), b), pa.transform)
    a_neg, b_w = pa.negated_whitened, pb.whitened
    if _is_boxlike(a_neg) and _is_boxlike(b_w):
        return cx.minkowski_sum_boxes(a_neg, b_w)
    return cx.minkowski_sum_general(a_neg, b_w)


def prepared_pcd(pa, pb, error, sphere_method="max"):
    """:func:`convex_pcd` for shapes already wrapped in :class:`PreparedShape`.

    The separating displacement is the point of ``V'`` closest to the
    origin, which is exactly what GJK on ``(A', B')`` converges to.
    """
    if sphere_method not in ("max", "tessellated"):
        raise ValueError(f"unknown sphere method {sphere_method!r}")
    if (sphere_method == "max" and isinstance(pa.shape, cx.Sphere)
            and isinstance(pb.shape, cx.Sphere)):
        return sphere_pcd_max(pa.shape, pb.shape, error)
    v_prime = minkowski_difference(pa, pb)
    x, contains = cx.closest_to_origin(v_prime)
    if contains:
        return CollisionBound(1.0, np.zeros(3), Method.CONVEX_DIVERGENCE)
    n_d = x / np.linalg.norm(x)
    p = surface_integral_upper(v_prime, n_d)
    return CollisionBound(p, x, Method.CONVEX_DIVERGENCE)


def _ball_offset(a, b, error):
    # eps' = eps - mean is zero-mean; collision iff eps' in ball(center, r_a + r_b)
    return np.asarray(b.center) - np.asarray(a.center) - error.mean, a.radius + b.radius


def sphere_max_density_point(center, radius, error, max_steps=SPHERE_BISECTION_STEPS):
    """Point of the ball ``|x - center| <= radius`` with maximal zero-mean density.

    Minimizes ``x^T S^-1 x`` over the ball.  With ``y = x - center`` the
    stationarity condition ``S^-1 (y + c) + lam y = 0`` gives, in the
    eigenbasis of ``S``, ``y_i = -c_i / (1 + lam s_i)``; ``|y(lam)|`` falls
    monotonically in ``lam``, so ``|y| = radius`` is found by bisection.
    """
    c = np.asarray(center, dtype=float)
    w, q = error.eigenvalues, error.eigenvectors
    cq = q.T @ c

    def radius_at(lam):
        return np.linalg.norm(cq / (1.0 + lam * w))

    if np.linalg.norm(c) <= radius or radius_at(0.0) <= radius:
        return np.zeros(3)

    lo, hi = 0.0, 1.0
    while radius_at(hi) > radius:
        hi *= 2.0
        if hi > 1e300:
            raise NonConvergence("multiplier bracket diverged")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        if radius_at(mid) > radius:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi or hi - lo <= 1e-300:
            break
    else:
        raise NonConvergence(f"bisection did not converge in {max_steps} steps")
    y = -cq / (1.0 + hi * w)
    return c + q @ y


def _zero_mean_density(x, error):
    w, q = error.eigenvalues, error.eigenvectors
    proj = q.T @ x
    maha = float(np.sum(proj * proj / w))
    return math.exp(-0.5 * maha) / math.sqrt((2.0 * math.pi) ** 3 * float(np.prod(w)))


def sphere_pcd_max(a, b, error):
    """Ball volume times the maximal density inside the ball (a true bound)."""
    c, r = _ball_offset(a, b, error)
    x = sphere_max_density_point(c, r, error)
    p = 4.0 / 3.0 * math.pi * r**3 * _zero_mean_density(x, error)
    return CollisionBound(min(p, 1.0), x, Method.SPHERE_MAX)


def sphere_pcd_center(a, b, error):
    """Ball volume times the density at the ball center; may under-estimate."""
    c, r = _ball_offset(a, b, error)
    p = 4.0 / 3.0 * math.pi * r**3 * _zero_mean_density(c, error)
    return CollisionBound(min(p, 1.0), c, Method.SPHERE_CENTER)
