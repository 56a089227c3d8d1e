import numpy as np
import pytest

from mfdplate.mesh import PolygonalMesh

ACCEPTANCE_LINES = []


def random_polygon(rng, m, convex=False):
    """Counter-clockwise star-shaped polygon with m vertices.

    Angles are jittered inside equal slots so consecutive vertices never
    swap, which keeps the boundary simple; random radii make it non-convex
    in general.
    """
    ang = 2 * np.pi * (np.arange(m) + rng.uniform(0.0, 0.8, m)) / m
    r = np.ones(m) if convex else rng.uniform(0.3, 1.0, m)
    c = rng.uniform(-2, 2, 2)
    s = rng.uniform(0.1, 3.0)
    return c + s * np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def polygon_moment(xy, p, q):
    """Integral of x^p y^q over a simple polygon by Green's theorem,
    x^p y^q dA = d/dx(x^{p+1} y^q / (p+1)), with exact Gauss rules per edge."""
    xy = np.asarray(xy, dtype=float)
    nxt = np.roll(xy, -1, axis=0)
    s, w = np.polynomial.legendre.leggauss(p + q + 2)
    s, w = 0.5 * (s + 1), 0.5 * w
    total = 0.0
    for a, b in zip(xy, nxt):
        pts = a + s[:, None] * (b - a)
        total += np.sum(w * pts[:, 0] ** (p + 1) * pts[:, 1] ** q) * (b[1] - a[1]) / (p + 1)
    return total


def single_cell_mesh(xy):
    xy = np.asarray(xy, dtype=float)
    return PolygonalMesh(xy, [list(range(len(xy)))])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
