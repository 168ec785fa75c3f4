"""Proxy-mesh construction: slicing, occupancy, marching cubes, simplification."""

from vmsplat.mesh.geometry import (
    FaceBvh,
    ProxyMesh,
    edge_face_map,
    face_areas,
    face_centroids,
    face_normals,
    is_edge_manifold,
    nearest_faces,
    nearest_of_subset,
)
from vmsplat.mesh.intersect import (
    PlaneEllipseIntersection,
    mahalanobis_sq,
    plane_ellipsoid_intersect,
)
from vmsplat.mesh.marching import marching_cubes
from vmsplat.mesh.occupancy import OccupancyGrid, morphological_clean, rasterize_slices
from vmsplat.mesh.simplify import simplify

__all__ = [
    "FaceBvh",
    "OccupancyGrid",
    "PlaneEllipseIntersection",
    "ProxyMesh",
    "edge_face_map",
    "face_areas",
    "face_centroids",
    "face_normals",
    "is_edge_manifold",
    "mahalanobis_sq",
    "marching_cubes",
    "morphological_clean",
    "nearest_faces",
    "nearest_of_subset",
    "plane_ellipsoid_intersect",
    "rasterize_slices",
    "simplify",
]
