"""Session fixtures: synthetic scenes preprocessed once and shared.

Each bundle records its own build time so acceptance tests can charge
scene construction against their runtime budgets.
"""

import sys
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for helpers.py

from vmsplat import synthetic
from vmsplat.pipeline import preprocess
from vmsplat.scene_io import SceneFile, write_scene


@dataclass
class SceneBundle:
    scene: SceneFile
    path: Path
    build_seconds: float
    layout: dict


def _build(tmp_path_factory, name, records, layout, **kwargs) -> SceneBundle:
    t0 = time.perf_counter()
    scene = preprocess(records, **kwargs)
    elapsed = time.perf_counter() - t0
    path = tmp_path_factory.mktemp(name) / f"{name}.vms"
    write_scene(scene, path)
    return SceneBundle(scene=scene, path=path, build_seconds=elapsed, layout=layout)


@pytest.fixture(scope="session")
def occluder_bundle(tmp_path_factory):
    """Two clusters behind/in front of a wall, hidden cluster unreachable:
    the scene for the occlusion-quality and never-resident checks."""
    records, layout = synthetic.occluder_scene(seed=1)
    return _build(
        tmp_path_factory,
        "occluder",
        records,
        layout,
        page_size=448,
        grid=96,
        close_radius=1,
        open_radius=1,
        target_faces=700,
        level_count=1,
    )


@pytest.fixture(scope="session")
def zoom_bundle(tmp_path_factory):
    """Large flat wall with a 4-level pyramid; zoom-out paths sweep the
    visible page count well past the buffer sizes under test."""
    records = synthetic.wall_scene(seed=11, count=39000, extent=24.0, z=10.0)
    return _build(
        tmp_path_factory,
        "zoom",
        records,
        {"z": 10.0, "extent": 24.0},
        page_size=96,
        grid=96,
        close_radius=1,
        open_radius=1,
        target_faces=1700,
        level_count=4,
        kmeans_iters=25,
    )


@pytest.fixture(scope="session")
def small_bundle(tmp_path_factory):
    """Small wall used by harness and CLI tests where speed matters more
    than scale."""
    records = synthetic.wall_scene(seed=5, count=5000, extent=6.0, z=8.0)
    return _build(
        tmp_path_factory,
        "small",
        records,
        {"z": 8.0, "extent": 6.0},
        page_size=128,
        grid=48,
        close_radius=1,
        open_radius=1,
        target_faces=300,
        level_count=3,
        kmeans_iters=10,
    )
