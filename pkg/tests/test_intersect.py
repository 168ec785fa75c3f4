"""Ellipsoid slicing oracles: every reported intersection point must satisfy
the ellipsoid's implicit equation, with no reference to the slicing code."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmsplat.errors import DegenerateEllipsoidError
from vmsplat.gaussians import Gaussian, quat_to_matrix
from vmsplat.mesh import mahalanobis_sq, plane_ellipsoid_intersect


def _random_gaussian(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Gaussian(
        position=rng.uniform(-5, 5, size=3),
        rotation=q,
        scale=rng.uniform(0.1, 3.0, size=3),
        opacity=1.0,
        sh=np.zeros((16, 3)),
    )


def _implicit(g, pts):
    """(x-c)' M (x-c) for the iso-extent ellipsoid; boundary value is 1."""
    rot = quat_to_matrix(np.asarray(g.rotation, dtype=np.float64))
    local = (np.atleast_2d(pts) - g.position) @ rot
    u = local / g.scale
    return np.einsum("ij,ij->i", u, u)


def test_thousand_random_pairs_satisfy_implicit_equation():
    rng = np.random.default_rng(0)
    t = np.linspace(0.0, 2.0 * np.pi, 17)
    hits = 0
    for _ in range(1000):
        g = _random_gaussian(rng)
        span = float(np.max(g.scale)) * 1.5
        plane_z = g.position[2] + rng.uniform(-span, span)
        cut = plane_ellipsoid_intersect(g, plane_z)
        if not cut.hit:
            continue
        hits += 1
        pts = cut.points(t)
        assert np.allclose(pts[:, 2], plane_z, atol=1e-9)
        assert np.max(np.abs(_implicit(g, pts) - 1.0)) < 1e-6
    assert hits > 400  # planes were drawn to hit often; a silent all-miss
    # run would make the oracle vacuous


def test_miss_reports_no_hit():
    g = Gaussian(
        position=np.zeros(3),
        rotation=np.array([1.0, 0.0, 0.0, 0.0]),
        scale=np.array([1.0, 1.0, 1.0]),
        opacity=1.0,
        sh=np.zeros((16, 3)),
    )
    cut = plane_ellipsoid_intersect(g, 2.0)
    assert not cut.hit
    assert not plane_ellipsoid_intersect(g, 1.0).hit  # tangent is a miss


def test_axis_aligned_sphere_slice_radius():
    g = Gaussian(
        position=np.array([0.0, 0.0, 0.0]),
        rotation=np.array([1.0, 0.0, 0.0, 0.0]),
        scale=np.array([2.0, 2.0, 2.0]),
        opacity=1.0,
        sh=np.zeros((16, 3)),
    )
    cut = plane_ellipsoid_intersect(g, 1.0)
    assert cut.hit
    # slicing a radius-2 sphere at z=1 gives radius sqrt(3)
    r = np.sqrt(3.0)
    assert np.isclose(np.linalg.norm(cut.axis1), r, atol=1e-12)
    assert np.isclose(np.linalg.norm(cut.axis2), r, atol=1e-12)
    assert np.allclose(cut.center, [0.0, 0.0, 1.0], atol=1e-12)


def test_degenerate_scale_raises():
    g = Gaussian(
        position=np.zeros(3),
        rotation=np.array([1.0, 0.0, 0.0, 0.0]),
        scale=np.array([1.0, 0.0, 1.0]),
        opacity=1.0,
        sh=np.zeros((16, 3)),
    )
    with pytest.raises(DegenerateEllipsoidError):
        plane_ellipsoid_intersect(g, 0.0)


def test_mahalanobis_matches_implicit():
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = _random_gaussian(rng)
        pts = rng.uniform(-6, 6, size=(20, 3))
        got = mahalanobis_sq(pts, g.position, g.rotation, g.scale)
        assert np.allclose(got, _implicit(g, pts), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    z=st.floats(-4, 4),
    sx=st.floats(0.05, 3),
    sy=st.floats(0.05, 3),
    sz=st.floats(0.05, 3),
)
def test_slice_points_on_boundary_property(z, sx, sy, sz):
    g = Gaussian(
        position=np.array([0.3, -0.2, 0.1]),
        rotation=np.array([1.0, 0.0, 0.0, 0.0]),
        scale=np.array([sx, sy, sz]),
        opacity=1.0,
        sh=np.zeros((16, 3)),
    )
    cut = plane_ellipsoid_intersect(g, z)
    inside = abs(z - 0.1) < sz
    assert cut.hit == inside
    if cut.hit:
        pts = cut.points(np.linspace(0, 2 * np.pi, 9))
        assert np.max(np.abs(_implicit(g, pts) - 1.0)) < 1e-6
