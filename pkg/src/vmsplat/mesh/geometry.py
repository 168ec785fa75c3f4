"""Triangle-mesh container and spatial queries used by paging and visibility."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vmsplat import kernels
from vmsplat.errors import InvariantViolation


@dataclass
class ProxyMesh:
    """Triangle mesh with one page ID per face (0 = unassigned)."""

    vertices: np.ndarray  # (nv, 3) float64
    faces: np.ndarray  # (nf, 3) int32
    face_page: np.ndarray = field(default=None)  # (nf,) uint32

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3)
        if self.face_page is None:
            self.face_page = np.zeros(len(self.faces), dtype=np.uint32)
        else:
            self.face_page = np.asarray(self.face_page, dtype=np.uint32).reshape(-1)

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    def validate(self) -> None:
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= self.vertex_count):
            raise InvariantViolation("face vertex index out of range")
        if self.face_page.shape[0] != self.face_count:
            raise InvariantViolation("face_page length does not match face count")

    def triangle_vertices(self) -> np.ndarray:
        """(nf, 3, 3) float64 corner positions."""
        return self.vertices[self.faces]


def face_centroids(mesh: ProxyMesh) -> np.ndarray:
    return mesh.triangle_vertices().mean(axis=1)


def face_areas(mesh: ProxyMesh) -> np.ndarray:
    tv = mesh.triangle_vertices()
    cr = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
    return 0.5 * np.linalg.norm(cr, axis=1)


def face_normals(mesh: ProxyMesh) -> np.ndarray:
    """Unit normals; zero vector for degenerate faces."""
    tv = mesh.triangle_vertices()
    cr = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
    n = np.linalg.norm(cr, axis=1)
    safe = np.where(n > 0, n, 1.0)
    return np.where((n > 0)[:, None], cr / safe[:, None], 0.0)


def edge_face_map(faces: np.ndarray) -> dict:
    """Map sorted vertex pair -> list of incident face indices."""
    out: dict = {}
    f = np.asarray(faces)
    for i in range(f.shape[0]):
        a, b, c = int(f[i, 0]), int(f[i, 1]), int(f[i, 2])
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            out.setdefault(key, []).append(i)
    return out


def is_edge_manifold(faces: np.ndarray) -> bool:
    """True when every edge is shared by exactly two faces (closed surface)."""
    if len(faces) == 0:
        return True
    return all(len(fs) == 2 for fs in edge_face_map(faces).values())


class FaceBvh:
    """Median-split BVH over mesh faces for nearest-face queries.

    Flat arrays consumed by the kernel: per node an AABB, two child indices
    (-1,-1 marks a leaf) and a half-open span into the face-order array.
    Distance ties resolve to the lowest face index regardless of tree shape.
    """

    LEAF_SIZE = 8

    def __init__(self, tri_verts: np.ndarray):
        tri_verts = np.ascontiguousarray(tri_verts, dtype=np.float64)
        if tri_verts.shape[0] == 0:
            raise InvariantViolation("cannot build a BVH over an empty mesh")
        self.tri_verts = tri_verts
        lo = tri_verts.min(axis=1)
        hi = tri_verts.max(axis=1)
        centers = tri_verts.mean(axis=1)

        bounds: list = []
        children: list = []
        ranges: list = []
        order = np.arange(tri_verts.shape[0], dtype=np.int32)

        # iterative build; stack holds (node_index, start, end)
        bounds.append(None)
        children.append((-1, -1))
        ranges.append((0, tri_verts.shape[0]))
        stack = [(0, 0, tri_verts.shape[0])]
        while stack:
            node, start, end = stack.pop()
            idx = order[start:end]
            bounds[node] = np.concatenate([lo[idx].min(axis=0), hi[idx].max(axis=0)])
            if end - start <= self.LEAF_SIZE:
                children[node] = (-1, -1)
                ranges[node] = (start, end)
                continue
            c = centers[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            local = np.argsort(c[:, axis], kind="stable")
            order[start:end] = idx[local]
            mid = start + (end - start) // 2
            left = len(bounds)
            right = left + 1
            for _ in range(2):
                bounds.append(None)
                children.append((-1, -1))
                ranges.append((0, 0))
            children[node] = (left, right)
            ranges[node] = (start, end)
            stack.append((left, start, mid))
            stack.append((right, mid, end))

        self.bounds = np.ascontiguousarray(np.stack(bounds), dtype=np.float64)
        self.children = np.ascontiguousarray(children, dtype=np.int32)
        self.ranges = np.ascontiguousarray(ranges, dtype=np.int32)
        self.order = np.ascontiguousarray(order, dtype=np.int32)

    @classmethod
    def from_mesh(cls, mesh: ProxyMesh) -> "FaceBvh":
        return cls(mesh.triangle_vertices())

    def nearest(self, points: np.ndarray):
        """(faces int64, distances float64) for each query point."""
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return kernels.bvh_nearest_points(
            points, self.bounds, self.children, self.ranges, self.order, self.tri_verts
        )


def nearest_faces(mesh: ProxyMesh, points: np.ndarray):
    """Convenience wrapper: build a BVH and query it once."""
    return FaceBvh.from_mesh(mesh).nearest(points)


def nearest_of_subset(points: np.ndarray, tri_verts: np.ndarray):
    """Nearest triangle among a small explicit set (single-leaf query).

    Returns indices into ``tri_verts`` with the same lowest-index tie rule
    as the full BVH.
    """
    tri_verts = np.ascontiguousarray(tri_verts, dtype=np.float64)
    k = tri_verts.shape[0]
    bounds = np.concatenate(
        [tri_verts.reshape(-1, 3).min(axis=0), tri_verts.reshape(-1, 3).max(axis=0)]
    )[None, :]
    children = np.array([[-1, -1]], dtype=np.int32)
    ranges = np.array([[0, k]], dtype=np.int32)
    order = np.arange(k, dtype=np.int32)
    return kernels.bvh_nearest_points(
        np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64),
        bounds,
        children,
        ranges,
        order,
        tri_verts,
    )
