"""Preprocessing stages: raw records -> proxy mesh -> pages -> LOD pyramid.

Each stage takes a scene at the previous stage and returns a new one; the
record array is reordered into page layout at the paging stage and extended
with coarser levels at the LOD stage. All stages are deterministic for a
fixed seed and run single-threaded unless VMSPLAT_THREADS says otherwise.
"""

from __future__ import annotations

import numpy as np

from vmsplat import lod, paging
from vmsplat.errors import SceneFormatError
from vmsplat.mesh import (
    ProxyMesh,
    marching_cubes,
    morphological_clean,
    rasterize_slices,
    simplify,
)
from vmsplat.scene_io import SceneFile, bounding_cube


def raw_scene(records: np.ndarray) -> SceneFile:
    center, half = bounding_cube(records)
    return SceneFile(
        stage="raw",
        center=center,
        half_extent=half,
        gaussians=np.ascontiguousarray(records, dtype=np.float32),
    )


def scene_mesh(scene: SceneFile) -> ProxyMesh:
    return ProxyMesh(
        vertices=scene.vertices.astype(np.float64),
        faces=scene.faces.astype(np.int32),
        face_page=scene.face_page.astype(np.uint32).copy(),
    )


def _require_stage(scene: SceneFile, wanted: str) -> None:
    if scene.stage != wanted:
        raise SceneFormatError(f"expected a {wanted!r} scene, got {scene.stage!r}")


def mesh_stage(
    scene: SceneFile,
    grid: int = 128,
    close_radius: int = 2,
    open_radius: int = 1,
    target_faces: int = 2000,
) -> SceneFile:
    """Build the proxy mesh: occupancy volume -> morphology -> isosurface ->
    quadric simplification down to target_faces."""
    _require_stage(scene, "raw")
    records = np.asarray(scene.gaussians)
    occ = rasterize_slices(records, resolution=grid)
    occ = morphological_clean(occ, close_radius, open_radius)
    mesh = marching_cubes(occ)
    if target_faces and len(mesh.faces) > target_faces:
        mesh = simplify(mesh, target_faces)
    return SceneFile(
        stage="meshed",
        center=scene.center,
        half_extent=scene.half_extent,
        vertices=np.ascontiguousarray(mesh.vertices, dtype=np.float32),
        faces=np.ascontiguousarray(mesh.faces, dtype=np.uint32),
        face_page=np.zeros(len(mesh.faces), dtype=np.uint32),
        gaussians=scene.gaussians,
    )


def page_stage(
    scene: SceneFile,
    page_size: int = 2048,
    samples_per_gaussian: int = 32,
    seed: int = 7,
    link_threshold: int = 1,
) -> SceneFile:
    """Partition records into pages over the proxy mesh, discover page links
    by sampling, and rewrite the record array in padded page order."""
    _require_stage(scene, "meshed")
    records = np.array(scene.gaussians, dtype=np.float32, copy=True)
    mesh = scene_mesh(scene)
    mesh, groups = paging.assign_pages(records, mesh, page_size)
    mesh, pages = paging.merge_pages(mesh, groups, page_size)
    mesh, pages = paging.link_pages(
        records,
        mesh,
        pages,
        samples_per_gaussian=samples_per_gaussian,
        seed=seed,
        link_threshold=link_threshold,
    )
    padded = paging.pad_pages(pages, page_size)
    gathered = paging.gather_records(records, padded)

    offsets = np.zeros(len(pages) + 1, dtype=np.uint32)
    targets = []
    for i, page in enumerate(pages):
        t = sorted(page.links)
        targets.extend(t)
        offsets[i + 1] = offsets[i] + len(t)
    return SceneFile(
        stage="paged",
        page_size=page_size,
        lod_levels=1,
        page_counts=[len(pages)],
        center=scene.center,
        half_extent=scene.half_extent,
        vertices=np.ascontiguousarray(mesh.vertices, dtype=np.float32),
        faces=np.ascontiguousarray(mesh.faces, dtype=np.uint32),
        face_page=np.ascontiguousarray(mesh.face_page, dtype=np.uint32),
        link_offsets=offsets,
        link_targets=np.asarray(targets, dtype=np.uint32),
        gaussians=gathered,
    )


def lod_stage(
    scene: SceneFile,
    level_count: int = lod.DEFAULT_LEVELS,
    scale_factor: float = lod.DEFAULT_SCALE_FACTOR,
    kmeans_iters: int = lod.DEFAULT_KMEANS_ITERS,
    seed: int = 7,
) -> SceneFile:
    """Append coarser record levels (half the live records per step)."""
    _require_stage(scene, "paged")
    levels = lod.build_pyramid(
        np.asarray(scene.gaussians),
        scene.page_size,
        level_count=level_count,
        scale_factor=scale_factor,
        max_iters=kmeans_iters,
        seed=seed,
    )
    return SceneFile(
        stage="full",
        page_size=scene.page_size,
        lod_levels=level_count,
        page_counts=[scene.page_count] * level_count,
        center=scene.center,
        half_extent=scene.half_extent,
        vertices=scene.vertices,
        faces=scene.faces,
        face_page=scene.face_page,
        link_offsets=scene.link_offsets,
        link_targets=scene.link_targets,
        gaussians=np.concatenate(levels, axis=0),
    )


def preprocess(
    records: np.ndarray,
    page_size: int = 2048,
    grid: int = 128,
    close_radius: int = 2,
    open_radius: int = 1,
    target_faces: int = 2000,
    samples_per_gaussian: int = 32,
    link_threshold: int = 1,
    level_count: int = lod.DEFAULT_LEVELS,
    scale_factor: float = lod.DEFAULT_SCALE_FACTOR,
    kmeans_iters: int = lod.DEFAULT_KMEANS_ITERS,
    seed: int = 7,
) -> SceneFile:
    """Run every stage in order. level_count 1 skips pyramid construction
    and leaves the scene at the paged stage (still renderable)."""
    scene = raw_scene(records)
    scene = mesh_stage(
        scene,
        grid=grid,
        close_radius=close_radius,
        open_radius=open_radius,
        target_faces=target_faces,
    )
    scene = page_stage(
        scene,
        page_size=page_size,
        samples_per_gaussian=samples_per_gaussian,
        seed=seed,
        link_threshold=link_threshold,
    )
    if level_count > 1:
        scene = lod_stage(
            scene,
            level_count=level_count,
            scale_factor=scale_factor,
            kmeans_iters=kmeans_iters,
            seed=seed,
        )
    return scene
