import numpy as np
import pytest

from pcdbound import convex as cx
from pcdbound.geometry import GaussianError, covariance_from_sigmas, random_rotation


def random_polytope(rng, n=None, center=None, scale=1.0):
    n = int(rng.integers(10, 51)) if n is None else n
    pts = rng.normal(size=(n, 3)) * scale * rng.uniform(0.4, 1.0, size=3)
    if center is not None:
        pts += center
    return cx.convex_hull(pts)


def random_error(rng, scale=1.0, lo=0.01, hi=0.1):
    sig = rng.uniform(lo, hi, size=3) * scale
    return GaussianError(np.zeros(3), covariance_from_sigmas(sig, random_rotation(int(rng.integers(1 << 31)))))


def random_box(rng):
    return cx.Box(rng.normal(size=3), rng.uniform(0.2, 1.0, size=3),
                  random_rotation(int(rng.integers(1 << 31))))


def unit_cube(center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=float)
    return cx.Aabb(c - 0.5, c + 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mc_convex(a, b, error, n, seed=0):
    """Monte Carlo estimate for two convex shapes; returns (estimate, std_error)."""
    from pcdbound.query import TriangleTree, collide_translations, gaussian_samples

    ta = TriangleTree.build(cx.to_polytope(a).triangles)
    tb = TriangleTree.build(cx.to_polytope(b).triangles)
    hits = collide_translations(ta, tb, gaussian_samples(error, n, seed)).sum()
    p = hits / n
    return p, float(np.sqrt(p * (1 - p) / n))


#: "CRITERION n: PASS/FAIL ..." lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def report(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
