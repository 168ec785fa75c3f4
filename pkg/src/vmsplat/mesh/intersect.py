"""Analytic intersection of horizontal planes with Gaussian ellipsoids.

An ellipsoid is the iso-extent surface of a Gaussian: points mu + R(s*q)
with ||q|| = 1. Transforming a plane z = h into that unit-sphere frame turns
the problem into plane-sphere intersection: the cross-section is a circle of
radius r = sqrt(1 - p^2) at signed offset p along the transformed plane
normal. The circle is parameterized by two orthogonal in-plane axes and
mapped back to world space, where it traces the exact intersection ellipse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vmsplat.errors import DegenerateEllipsoidError
from vmsplat.gaussians import Gaussian, quat_to_matrix

_AXIS_EPS = 1e-12


@dataclass(frozen=True)
class PlaneEllipseIntersection:
    """Parametric world-space ellipse c(t) = center + axis1*cos t + axis2*sin t.

    ``hit`` is False when the plane misses the ellipsoid (axes are zero then).
    In the unit-sphere frame the two axes are orthogonal to each other and to
    the plane normal, both of length sqrt(1 - p^2).
    """

    hit: bool
    center: np.ndarray
    axis1: np.ndarray
    axis2: np.ndarray

    def points(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return (
            self.center[None, :]
            + np.cos(t)[:, None] * self.axis1[None, :]
            + np.sin(t)[:, None] * self.axis2[None, :]
        )


class SliceFrames:
    """Plane-height-independent part of the slicing math, batched.

    For each ellipsoid, the transformed plane normal and the two in-plane
    directions depend only on rotation and scale; sweeping planes over z
    then costs one division and one square root per ellipsoid.
    """

    def __init__(self, positions, rotations, scales):
        positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        rotations = np.atleast_2d(np.asarray(rotations, dtype=np.float64))
        scales = np.atleast_2d(np.asarray(scales, dtype=np.float64))
        rot = quat_to_matrix(rotations)  # (n, 3, 3)
        m = rot[:, 2, :]  # R^T e_z rows
        sn = scales * m
        norm = np.linalg.norm(sn, axis=1)
        self.valid = norm > 0.0
        safe = np.where(self.valid, norm, 1.0)
        nhat = sn / safe[:, None]
        d1 = np.stack([nhat[:, 1], -nhat[:, 0], np.zeros(len(norm))], axis=1)
        planar = np.hypot(d1[:, 0], d1[:, 1])
        axis_aligned = planar < _AXIS_EPS
        d1[axis_aligned] = (1.0, 0.0, 0.0)
        d1[~axis_aligned] /= planar[~axis_aligned, None]
        d2 = np.cross(nhat, d1)

        def to_world(v):
            return np.einsum("nij,nj->ni", rot, scales * v)

        self.positions = positions
        self.norm = norm
        self.center_dir = to_world(nhat)  # world offset per unit p
        self.axis1_unit = to_world(d1)  # world axis per unit radius
        self.axis2_unit = to_world(d2)

    def slice_at(self, plane_z: float, inclusive: bool = False):
        """Intersect every ellipsoid with the plane z = plane_z.

        Returns (hit mask, centers, axis1, axis2) with world-space arrays.
        ``inclusive`` admits tangent planes (|p| = 1, zero-radius circle);
        the public single-ellipsoid operation keeps the strict rule.
        """
        safe = np.where(self.valid, self.norm, 1.0)
        p = (plane_z - self.positions[:, 2]) / safe
        if inclusive:
            hit = self.valid & (np.abs(p) <= 1.0)
        else:
            hit = self.valid & (np.abs(p) < 1.0)
        r = np.sqrt(np.maximum(0.0, 1.0 - p * p))
        centers = self.positions + p[:, None] * self.center_dir
        axis1 = r[:, None] * self.axis1_unit
        axis2 = r[:, None] * self.axis2_unit
        return hit, centers, axis1, axis2


def plane_ellipsoid_intersect(g: Gaussian, plane_z: float) -> PlaneEllipseIntersection:
    """Intersection of the plane z = plane_z with one Gaussian's ellipsoid.

    A tangent plane (|p| = 1) does not count as a hit. Raises
    DegenerateEllipsoidError when a scale component is not positive.
    """
    scale = np.asarray(g.scale, dtype=np.float64)
    if np.any(scale <= 0.0):
        raise DegenerateEllipsoidError(
            f"scale components must be positive, got {scale.tolist()}"
        )
    frames = SliceFrames(g.position, g.rotation, scale)
    hit, centers, axis1, axis2 = frames.slice_at(float(plane_z))
    if not hit[0]:
        zero = np.zeros(3)
        return PlaneEllipseIntersection(False, zero, zero, zero)
    return PlaneEllipseIntersection(True, centers[0], axis1[0], axis2[0])


def mahalanobis_sq(points, position, rotation, scale) -> np.ndarray:
    """Squared iso-extent distance of world points to one Gaussian.

    Values <= 1 lie inside the ellipsoid.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rot = quat_to_matrix(np.asarray(rotation, dtype=np.float64))
    local = (points - np.asarray(position, dtype=np.float64)) @ rot
    q = local / np.asarray(scale, dtype=np.float64)
    return np.einsum("ij,ij->i", q, q)


def ellipsoid_aabb(positions, rotations, scales):
    """Tight world axis-aligned bounds of iso-extent ellipsoids.

    Half-extent along world axis i is ||row_i(R) * s||. Returns (lo, hi)
    arrays of shape (n, 3).
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    rotations = np.atleast_2d(np.asarray(rotations, dtype=np.float64))
    scales = np.atleast_2d(np.asarray(scales, dtype=np.float64))
    rot = quat_to_matrix(rotations)
    half = np.linalg.norm(rot * scales[:, None, :], axis=2)
    return positions - half, positions + half
