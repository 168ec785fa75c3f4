"""Deterministic software renderer: EWA splatting and mesh rasterization.

Camera convention: +Z forward, +X right, +Y down (pixel y grows downward),
principal point at the image center, f_x = f_y = (height/2) / tan(fov_y/2).
Pixel (x, y) samples at (x + 0.5, y + 0.5).

Rendering is a pure function of (records, camera): records are culled
(padding opacity 0, behind near plane), depth-keyed, stably radix-sorted
front to back, projected, and composited. Equal-depth ties keep record
order, so the record layout fixes the image bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vmsplat import kernels
from vmsplat.errors import InvariantViolation
from vmsplat.gaussians import quat_to_matrix

LOW_PASS = 0.3  # px^2, added to the projected covariance diagonal
MIN_DET = 1e-12
EXTENT_SIGMA = 3.0

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


@dataclass(frozen=True)
class Camera:
    position: tuple
    orientation: tuple  # unit quaternion, (w, x, y, z)
    fov_y: float
    width: int
    height: int
    near: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.fov_y < np.pi):
            raise InvariantViolation("fov_y must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise InvariantViolation("resolution must be at least 1x1")
        if self.near <= 0:
            raise InvariantViolation("near plane must be positive")
        pos = np.asarray(self.position, dtype=np.float64)
        q = np.asarray(self.orientation, dtype=np.float64)
        if not (np.isfinite(pos).all() and np.isfinite(q).all()):
            raise InvariantViolation("camera pose must be finite")
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise InvariantViolation("camera orientation must be a unit quaternion")

    @property
    def focal(self) -> float:
        return (self.height / 2.0) / np.tan(self.fov_y / 2.0)

    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation (columns are the camera axes)."""
        return quat_to_matrix(np.asarray(self.orientation, dtype=np.float64))

    def world_to_view(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (p - np.asarray(self.position, dtype=np.float64)) @ self.rotation()

    def view_to_pixels(self, view: np.ndarray) -> np.ndarray:
        """(x, y, 1/z) screen coordinates; caller guarantees z > 0."""
        f = self.focal
        out = np.empty_like(view)
        out[:, 0] = f * view[:, 0] / view[:, 2] + self.width / 2.0
        out[:, 1] = f * view[:, 1] / view[:, 2] + self.height / 2.0
        out[:, 2] = 1.0 / view[:, 2]
        return out

    def scaled(self, factor: float) -> "Camera":
        """Same view frustum at a different resolution."""
        return Camera(
            self.position,
            self.orientation,
            self.fov_y,
            max(1, int(round(self.width * factor))),
            max(1, int(round(self.height * factor))),
            self.near,
        )


def evaluate_sh(coeffs: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Degree-3 real spherical harmonics -> RGB, 3DGS basis and constants.

    ``coeffs``: (n, 16, 3); ``dirs``: (n, 3) unit vectors. Returns (n, 3)
    colors = max(0, 0.5 + sum), clamped only from below.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1, 16, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z

    basis = np.empty((len(d), 16), dtype=np.float64)
    basis[:, 0] = SH_C0
    basis[:, 1] = -SH_C1 * y
    basis[:, 2] = SH_C1 * z
    basis[:, 3] = -SH_C1 * x
    basis[:, 4] = SH_C2[0] * xy
    basis[:, 5] = SH_C2[1] * yz
    basis[:, 6] = SH_C2[2] * (2.0 * zz - xx - yy)
    basis[:, 7] = SH_C2[3] * xz
    basis[:, 8] = SH_C2[4] * (xx - yy)
    basis[:, 9] = SH_C3[0] * y * (3.0 * xx - yy)
    basis[:, 10] = SH_C3[1] * xy * z
    basis[:, 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    basis[:, 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    basis[:, 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    basis[:, 14] = SH_C3[5] * z * (xx - yy)
    basis[:, 15] = SH_C3[6] * x * (xx - 3.0 * yy)

    color = 0.5 + np.einsum("nk,nkc->nc", basis, coeffs)
    return np.maximum(color, 0.0)


def compute_keys(records: np.ndarray, camera: Camera):
    """(keys uint32, slot indices int64) for sortable records.

    A record emits no entry when its opacity is 0 (padding) or its view z is
    not strictly beyond the near plane. Keys are the IEEE bits of float32
    view z, monotone for the positive range that survives the cull.
    """
    records = np.asarray(records, dtype=np.float32)
    if len(records) == 0:
        return np.zeros(0, np.uint32), np.zeros(0, np.int64)
    view = camera.world_to_view(records[:, 0:3].astype(np.float64))
    live = (records[:, 10] > 0.0) & (view[:, 2] > camera.near)
    idx = np.flatnonzero(live).astype(np.int64)
    keys = view[idx, 2].astype(np.float32).view(np.uint32)
    return keys, idx


def project_records(records: np.ndarray, camera: Camera):
    """EWA projection of records (already culled and depth-ordered).

    Returns (centers f64 (m,2), conics f64 (m,3) as (a, b, c), colors f32,
    alphas f32, bounds i32 (m,4) half-open, kept mask over the input rows).
    Splats whose blurred covariance is near-singular or whose 3-sigma box
    misses the viewport are dropped (kept=False).
    """
    records = np.asarray(records, dtype=np.float32)
    m = len(records)
    if m == 0:
        z = np.zeros
        return z((0, 2)), z((0, 3)), z((0, 3), np.float32), z(0, np.float32), z((0, 4), np.int32), z(0, bool)

    mu = records[:, 0:3].astype(np.float64)
    rot = quat_to_matrix(records[:, 3:7].astype(np.float64))
    scale = records[:, 7:10].astype(np.float64)
    alphas = records[:, 10]
    sh = records[:, 11:].reshape(m, 16, 3)

    cam_rot = camera.rotation()
    view = (mu - np.asarray(camera.position, dtype=np.float64)) @ cam_rot
    tx, ty, tz = view[:, 0], view[:, 1], view[:, 2]
    f = camera.focal

    ms = rot * scale[:, None, :]
    cov3 = ms @ ms.transpose(0, 2, 1)

    j = np.zeros((m, 2, 3), dtype=np.float64)
    j[:, 0, 0] = f / tz
    j[:, 0, 2] = -f * tx / (tz * tz)
    j[:, 1, 1] = f / tz
    j[:, 1, 2] = -f * ty / (tz * tz)
    jw = j @ cam_rot.T
    cov2 = jw @ cov3 @ jw.transpose(0, 2, 1)
    a = cov2[:, 0, 0] + LOW_PASS
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1] + LOW_PASS

    det = a * c - b * b
    kept = det >= MIN_DET

    with np.errstate(divide="ignore", invalid="ignore"):
        conics = np.column_stack((c / det, -b / det, a / det))

    mid = 0.5 * (a + c)
    lam = mid + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    radius = EXTENT_SIGMA * np.sqrt(np.maximum(lam, 0.0))

    cx = f * tx / tz + camera.width / 2.0
    cy = f * ty / tz + camera.height / 2.0
    x0 = np.maximum(np.floor(cx - radius - 0.5), 0.0)
    x1 = np.minimum(np.ceil(cx + radius + 0.5), camera.width)
    y0 = np.maximum(np.floor(cy - radius - 0.5), 0.0)
    y1 = np.minimum(np.ceil(cy + radius + 0.5), camera.height)
    kept &= (x1 > x0) & (y1 > y0)

    view_dir = mu - np.asarray(camera.position, dtype=np.float64)
    norm = np.linalg.norm(view_dir, axis=1, keepdims=True)
    view_dir = view_dir / np.where(norm > 0, norm, 1.0)
    colors = evaluate_sh(sh, view_dir).astype(np.float32)

    centers = np.column_stack((cx, cy))
    bounds = np.column_stack((x0, x1, y0, y1)).astype(np.int32)
    k = np.flatnonzero(kept)
    return centers[k], conics[k], colors[k], alphas[k].astype(np.float32), bounds[k], kept


def project_gaussian(record: np.ndarray, camera: Camera):
    """Single-record projection: (center, conic 2x2, bounds, color, alpha),
    or None when the splat is skipped (near-singular covariance)."""
    centers, conics, colors, alphas, bounds, kept = project_records(
        np.asarray(record, dtype=np.float32).reshape(1, -1), camera
    )
    if not kept[0]:
        return None
    a, b, c = conics[0]
    return centers[0], np.array([[a, b], [b, c]]), bounds[0], colors[0], float(alphas[0])


def depth_order(records: np.ndarray, camera: Camera) -> np.ndarray:
    """Front-to-back record order (culled records excluded from the front)."""
    keys, idx = compute_keys(records, camera)
    _, order = kernels.radix_sort_pairs(keys, idx)
    return order


def composite_ordered(records: np.ndarray, order: np.ndarray, camera: Camera) -> np.ndarray:
    """Project records in the given order and composite. float32 (h, w, 3)."""
    sorted_records = np.asarray(records, dtype=np.float32)[order]
    centers, conics, colors, alphas, bounds, _ = project_records(sorted_records, camera)
    image = np.zeros((camera.height, camera.width, 3), dtype=np.float32)
    kernels.composite_splats(centers, conics, colors, alphas, bounds, image)
    return image


def render_records(records: np.ndarray, camera: Camera) -> np.ndarray:
    """Cull, sort front to back, project, composite. Returns float32 (h, w, 3)."""
    return composite_ordered(records, depth_order(records, camera), camera)


def _clip_near(tri_view: np.ndarray, near: float) -> list:
    """Clip one view-space triangle against z = near; 0..2 triangles out."""
    inside = tri_view[:, 2] > near
    n_in = int(inside.sum())
    if n_in == 0:
        return []
    if n_in == 3:
        return [tri_view]
    poly = []
    for i in range(3):
        a, b = tri_view[i], tri_view[(i + 1) % 3]
        ain, bin_ = inside[i], inside[(i + 1) % 3]
        if ain:
            poly.append(a)
        if ain != bin_:
            t = (near - a[2]) / (b[2] - a[2])
            poly.append(a + t * (b - a))
    out = []
    for i in range(1, len(poly) - 1):
        out.append(np.stack([poly[0], poly[i], poly[i + 1]]))
    return out


def render_visibility(mesh, camera: Camera):
    """Rasterize the proxy mesh into a page-ID image plus view-space depth.

    Every face rasterizes, including ones carrying page 0, so unassigned
    geometry still occludes (a hidden page must not be pulled just because
    the face in front of it has no page). Background pixels hold id 0 and
    depth +inf.
    """
    id_image = np.zeros((camera.height, camera.width), dtype=np.uint32)
    invz = np.zeros((camera.height, camera.width), dtype=np.float64)
    if mesh.face_count:
        view = camera.world_to_view(mesh.vertices)
        tris = []
        ids = []
        for fi in range(mesh.face_count):
            tv = view[mesh.faces[fi]]
            for clipped in _clip_near(tv, camera.near):
                tris.append(camera.view_to_pixels(clipped))
                ids.append(mesh.face_page[fi])
        if tris:
            kernels.rasterize_triangles(
                np.ascontiguousarray(np.stack(tris)),
                np.ascontiguousarray(ids, dtype=np.uint32),
                id_image,
                invz,
            )
    with np.errstate(divide="ignore"):
        depth = np.where(invz > 0.0, 1.0 / np.where(invz > 0.0, invz, 1.0), np.inf)
    return id_image, depth.astype(np.float64)
