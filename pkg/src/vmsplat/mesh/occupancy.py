"""Boolean occupancy grids built by slicing ellipsoids plane by plane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from vmsplat.errors import InvariantViolation
from vmsplat.gaussians import OPACITY, POS, ROT, SCALE, Gaussian
from vmsplat.mesh.intersect import SliceFrames, ellipsoid_aabb, quat_to_matrix


@dataclass
class OccupancyGrid:
    """Cubic-cell boolean grid; cell (i,j,k) center = origin + (idx + 0.5) * voxel_size."""

    values: np.ndarray  # bool (nx, ny, nz)
    origin: np.ndarray  # (3,) world corner of cell (0, 0, 0)
    voxel_size: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=bool)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.voxel_size = float(self.voxel_size)
        if self.voxel_size <= 0:
            raise InvariantViolation("voxel_size must be positive")
        if min(self.values.shape) < 2:
            raise InvariantViolation("grid resolution must be >= 2 per axis")

    @property
    def resolution(self) -> tuple:
        return self.values.shape

    def cell_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=np.float64) + 0.5) * self.voxel_size


def _gaussian_arrays(gaussians):
    """(positions, rotations, scales) float64 from records, Gaussian list, or tuple."""
    if isinstance(gaussians, np.ndarray):
        return (
            gaussians[:, POS].astype(np.float64),
            gaussians[:, ROT].astype(np.float64),
            gaussians[:, SCALE].astype(np.float64),
        )
    if len(gaussians) and isinstance(gaussians[0], Gaussian):
        pos = np.array([g.position for g in gaussians], dtype=np.float64)
        rot = np.array([g.rotation for g in gaussians], dtype=np.float64)
        sc = np.array([g.scale for g in gaussians], dtype=np.float64)
        return pos, rot, sc
    return (
        np.zeros((0, 3), dtype=np.float64),
        np.zeros((0, 4), dtype=np.float64),
        np.zeros((0, 3), dtype=np.float64),
    )


def rasterize_slices(gaussians, resolution: int = 128, bounds=None, margin: int = 2) -> OccupancyGrid:
    """Occupancy over the scene bounding cube: a cell is set iff its center
    lies inside at least one ellipsoid (iso-extent Mahalanobis <= 1).

    Candidate cells come from per-Z-slice intersection ellipses (conservative
    parametric bounding boxes); the per-cell test itself is the Mahalanobis
    predicate, so the result matches a brute-force point-in-ellipsoid sweep
    exactly. ``resolution`` counts cells along the cube edge before the empty
    ``margin`` cells added on every side; ``bounds`` overrides the automatic
    cube as (lo, hi) corners.
    """
    if resolution < 2:
        raise InvariantViolation("resolution must be >= 2")
    pos, rot, sc = _gaussian_arrays(gaussians)
    degenerate = (sc <= 0).any(axis=1) if len(sc) else np.zeros(0, dtype=bool)
    pos, rot, sc = pos[~degenerate], rot[~degenerate], sc[~degenerate]

    if bounds is not None:
        lo = np.asarray(bounds[0], dtype=np.float64)
        hi = np.asarray(bounds[1], dtype=np.float64)
    elif len(pos):
        alo, ahi = ellipsoid_aabb(pos, rot, sc)
        lo, hi = alo.min(axis=0), ahi.max(axis=0)
    else:
        lo, hi = np.zeros(3), np.ones(3)
    center = 0.5 * (lo + hi)
    side = float(max(hi - lo)) or 1.0
    voxel = side / resolution
    n = resolution + 2 * margin
    origin = center - 0.5 * side - margin * voxel

    values = np.zeros((n, n, n), dtype=bool)
    if not len(pos):
        return OccupancyGrid(values, origin, voxel)

    frames = SliceFrames(pos, rot, sc)
    rot_mats = quat_to_matrix(rot)
    xs = origin[0] + (np.arange(n) + 0.5) * voxel
    ys = origin[1] + (np.arange(n) + 0.5) * voxel
    for k in range(n):
        z = origin[2] + (k + 0.5) * voxel
        hit, centers, a1, a2 = frames.slice_at(z, inclusive=True)
        for g in np.flatnonzero(hit):
            hx = np.hypot(a1[g, 0], a2[g, 0])
            hy = np.hypot(a1[g, 1], a2[g, 1])
            ix0 = max(0, int(np.ceil((centers[g, 0] - hx - origin[0]) / voxel - 0.5)))
            ix1 = min(n - 1, int(np.floor((centers[g, 0] + hx - origin[0]) / voxel - 0.5)))
            iy0 = max(0, int(np.ceil((centers[g, 1] - hy - origin[1]) / voxel - 0.5)))
            iy1 = min(n - 1, int(np.floor((centers[g, 1] + hy - origin[1]) / voxel - 0.5)))
            if ix1 < ix0 or iy1 < iy0:
                continue
            px, py = np.meshgrid(xs[ix0 : ix1 + 1], ys[iy0 : iy1 + 1], indexing="ij")
            pts = np.stack([px, py, np.full_like(px, z)], axis=-1)
            local = (pts - pos[g]) @ rot_mats[g] / sc[g]
            inside = np.einsum("...j,...j->...", local, local) <= 1.0
            values[ix0 : ix1 + 1, iy0 : iy1 + 1, k] |= inside
    return OccupancyGrid(values, origin, voxel)


def _cube(radius: int) -> np.ndarray:
    return np.ones((2 * radius + 1,) * 3, dtype=bool)


def _close(values: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return values
    # dilation treats outside as empty, erosion as full: the pair is an
    # adjunction on the finite window, which makes closing idempotent
    se = _cube(radius)
    out = ndimage.binary_dilation(values, structure=se, border_value=0)
    return ndimage.binary_erosion(out, structure=se, border_value=1)


def _open(values: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return values
    se = _cube(radius)
    out = ndimage.binary_erosion(values, structure=se, border_value=1)
    return ndimage.binary_dilation(out, structure=se, border_value=0)


def morphological_clean(grid: OccupancyGrid, close_radius: int, open_radius: int) -> OccupancyGrid:
    """Closing (fill holes up to close_radius) then opening (drop specks up
    to open_radius), cubic structuring elements. Radius 0 is the identity."""
    if close_radius < 0 or open_radius < 0:
        raise InvariantViolation("morphology radii must be >= 0")
    values = _open(_close(grid.values, close_radius), open_radius)
    return OccupancyGrid(values.copy(), grid.origin.copy(), grid.voxel_size)
