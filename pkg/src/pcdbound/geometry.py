"""Numeric foundation: covariance handling, whitening, error function, rotations.

Vectors are ``numpy`` arrays of shape ``(3,)`` and matrices arrays of shape
``(3, 3)``.  Everything here is pure; the small dataclasses are frozen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import NotPositiveDefinite, NotSymmetric

SYMMETRY_RTOL = 1e-9
PD_RATIO = 1e-12


def as_vec3(v, name="vector"):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite components")
    return a


def as_mat3(m, name="matrix"):
    a = np.asarray(m, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def check_covariance(covariance):
    """Validate an SPD covariance and return its eigendecomposition.

    Returns
    -------
    eigenvalues : array, shape (3,)
        Ascending eigenvalues.
    eigenvectors : array, shape (3, 3)
        Orthonormal eigenvectors as columns.

    Raises
    ------
    NotSymmetric
        If ``|S - S^T|`` exceeds ``1e-9`` times the largest entry.
    NotPositiveDefinite
        If the smallest eigenvalue is not above ``1e-12`` times the largest.
    """
    cov = as_mat3(covariance, "covariance")
    scale = np.max(np.abs(cov))
    if scale == 0.0:
        raise NotPositiveDefinite("covariance is the zero matrix")
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
        raise NotSymmetric("covariance is not symmetric")
    sym = 0.5 * (cov + cov.T)
    w, q = np.linalg.eigh(sym)
    if w[-1] <= 0.0 or w[0] <= PD_RATIO * w[-1]:
        raise NotPositiveDefinite(
            f"covariance eigenvalues {w} violate the ratio bound {PD_RATIO:g}")
    return w, q


def sqrt_inv_covariance(covariance):
    """Symmetric inverse square root ``T`` with ``T @ S @ T.T == I``."""
    w, q = check_covariance(covariance)
    t = (q * (1.0 / np.sqrt(w))) @ q.T
    return 0.5 * (t + t.T)


def erf(t):
    """Gaussian error function; accepts scalars or arrays."""
    if np.ndim(t) == 0:
        return math.erf(float(t))
    return special.erf(np.asarray(t, dtype=float))


def gaussian_pdf(x, mean, covariance):
    """Trivariate normal density ``N(mean, covariance)`` evaluated at ``x``.

    ``x`` may be a single point or an ``(n, 3)`` array.
    """
    w, q = check_covariance(covariance)
    x = np.asarray(x, dtype=float)
    diff = x - as_vec3(mean, "mean")
    # Mahalanobis norm in the eigenbasis avoids forming the inverse
    proj = diff @ q
    maha = np.sum(proj * proj / w, axis=-1)
    norm = math.sqrt((2.0 * math.pi) ** 3 * float(np.prod(w)))
    return np.exp(-0.5 * maha) / norm


def quaternion_to_matrix(q):
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(seed):
    """Uniformly distributed rotation matrix, deterministic per ``seed``.

    A normalized 4D standard normal draw is uniform on the unit quaternion
    sphere, which maps to the Haar measure on SO(3).
    """
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(4)
    while np.linalg.norm(q) < 1e-12:
        q = rng.standard_normal(4)
    return quaternion_to_matrix(q)


def covariance_from_sigmas(sigmas, axes=None):
    """Build ``R diag(sigma^2) R^T`` from per-axis standard deviations."""
    s = np.broadcast_to(np.asarray(sigmas, dtype=float), (3,))
    if np.any(s <= 0):
        raise ValueError("standard deviations must be positive")
    r = np.eye(3) if axes is None else as_mat3(axes, "axes")
    cov = (r * s**2) @ r.T
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class GaussianError:
    """Positional error ``eps ~ N(mean, covariance)`` applied to object A."""

    mean: np.ndarray
    covariance: np.ndarray
    _eig: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", as_vec3(self.mean, "mean"))
        cov = as_mat3(self.covariance, "covariance")
        eig = check_covariance(cov)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))
        object.__setattr__(self, "_eig", eig)

    @classmethod
    def isotropic(cls, sigma, mean=(0.0, 0.0, 0.0)):
        return cls(mean, np.eye(3) * float(sigma) ** 2)

    @property
    def eigenvalues(self):
        return self._eig[0]

    @property
    def eigenvectors(self):
        return self._eig[1]

    def whitening(self):
        w, q = self._eig
        t = (q * (1.0 / np.sqrt(w))) @ q.T
        return 0.5 * (t + t.T)

    def cholesky(self):
        return np.linalg.cholesky(self.covariance)

    def rotated(self, rotation):
        """Error expressed in a frame rotated by ``rotation``."""
        r = as_mat3(rotation, "rotation")
        return GaussianError(r @ self.mean, r @ self.covariance @ r.T)


@dataclass(frozen=True)
class Isometry:
    """Rigid placement ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = as_mat3(self.rotation, "rotation")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9 or np.linalg.det(r) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation",
                           as_vec3(self.translation, "translation"))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other):
        """``self`` after ``other``."""
        return Isometry(self.rotation @ other.rotation,
                        self.rotation @ other.translation + self.translation)
