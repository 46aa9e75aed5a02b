"""Guaranteed upper bounds on mesh collision probability under Gaussian positional error."""
from .bound import (
    CollisionBound, Method, convex_pcd, field_f, relaxed_density, sphere_pcd_center,
    sphere_pcd_max, surface_integral_upper,
)
from .bvh import BVType, BvhNode, BvhTree, build_bvh, bv_volume, bve, fit_bv
from .convex import (
    Aabb, Box, ConvexPolytope, Kdop26, Sphere, Zonotope, apply_linear, convex_hull,
    gjk_distance, minkowski_sum_boxes, minkowski_sum_general, minkowski_sum_kdop, support,
)
from .errors import (
    ConfigError, DegenerateInput, DegenerateShape, EmptyMesh, NonConvergence,
    NotPositiveDefinite, NotSymmetric, OpenMesh, ParseError, PCDError, SingularTransform,
)
from .geometry import (
    GaussianError, Isometry, covariance_from_sigmas, erf, gaussian_pdf, random_rotation,
    sqrt_inv_covariance,
)
from .mesh import TriMesh, load_mesh
from .query import (
    MonteCarloResult, PcdQuery, PcdResult, exact_collide, general_pcd, monte_carlo_probability,
)

__version__ = "0.1.0"
