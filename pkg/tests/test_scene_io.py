"""Scene container round trips and format rejection paths."""

import numpy as np
import pytest
from helpers import encode_ply, write_ply

from vmsplat.errors import ParseError, SceneFormatError
from vmsplat.gaussians import RECORD_SIZE
from vmsplat.pipeline import raw_scene
from vmsplat.scene_io import (
    SceneFile,
    bounding_cube,
    load_input_scene,
    read_scene,
    write_scene,
)
from vmsplat.synthetic import wall_scene


@pytest.fixture()
def records():
    return wall_scene(seed=9, count=300, extent=3.0, z=5.0)


def test_point_file_round_trip(tmp_path, records):
    path = tmp_path / "in.ply"
    write_ply(path, records)
    back = load_input_scene(path)
    assert back.shape == records.shape
    # opacity passes through a logit/sigmoid pair, scale through log/exp;
    # float32 storage caps the agreement
    assert np.abs(back - records).max() < 1e-5


def test_point_file_bounding_filter(tmp_path):
    near_origin = wall_scene(seed=9, count=300, extent=3.0, z=0.5)
    path = tmp_path / "in.ply"
    write_ply(path, near_origin)
    tight = load_input_scene(path, bounding_half_extent=1.0)
    assert 0 < len(tight) < len(near_origin)
    assert np.abs(tight[:, 0:3]).max() <= 1.0


def test_point_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_bytes(b"not a point file at all")
    with pytest.raises(ParseError):
        load_input_scene(path)


def test_point_file_rejects_truncation(tmp_path, records):
    blob = encode_ply(records)
    path = tmp_path / "short.ply"
    path.write_bytes(blob[:-100])
    with pytest.raises(ParseError):
        load_input_scene(path)


def test_point_file_rejects_non_finite(tmp_path, records):
    bad = records.copy()
    bad[5, 0] = np.nan
    blob = encode_ply(bad)
    path = tmp_path / "nan.ply"
    path.write_bytes(blob)
    with pytest.raises(ParseError):
        load_input_scene(path)


def test_scene_round_trip_raw(tmp_path, records):
    scene = raw_scene(records)
    path = tmp_path / "scene.vms"
    write_scene(scene, path)
    back = read_scene(path)
    assert back.stage == "raw"
    assert np.array_equal(back.gaussians, scene.gaussians)
    assert back.center == pytest.approx(scene.center)
    assert back.half_extent == pytest.approx(scene.half_extent)


def test_scene_round_trip_full(tmp_path, small_bundle):
    back = read_scene(small_bundle.path)
    scene = small_bundle.scene
    assert back.stage == scene.stage
    assert back.page_size == scene.page_size
    assert back.lod_levels == scene.lod_levels
    assert back.page_counts == scene.page_counts
    assert np.array_equal(back.gaussians, np.asarray(scene.gaussians))
    assert np.array_equal(back.vertices, scene.vertices)
    assert np.array_equal(back.faces, scene.faces)
    assert np.array_equal(back.face_page, scene.face_page)
    assert np.array_equal(back.link_offsets, scene.link_offsets)
    assert np.array_equal(back.link_targets, scene.link_targets)


def test_scene_write_is_deterministic(tmp_path, records):
    scene = raw_scene(records)
    a, b = tmp_path / "a.vms", tmp_path / "b.vms"
    write_scene(scene, a)
    write_scene(scene, b)
    assert a.read_bytes() == b.read_bytes()


def test_mmap_matches_eager(tmp_path, small_bundle):
    eager = read_scene(small_bundle.path)
    lazy = read_scene(small_bundle.path, mmap_gaussians=True)
    assert isinstance(lazy.gaussians, np.memmap)
    assert np.array_equal(np.asarray(lazy.gaussians), eager.gaussians)


def test_scene_rejects_bad_magic(tmp_path, records):
    path = tmp_path / "scene.vms"
    write_scene(raw_scene(records), path)
    blob = bytearray(path.read_bytes())
    blob[0:4] = b"JUNK"
    path.write_bytes(bytes(blob))
    with pytest.raises(SceneFormatError):
        read_scene(path)


def test_scene_rejects_truncation(tmp_path, records):
    path = tmp_path / "scene.vms"
    write_scene(raw_scene(records), path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 64])
    with pytest.raises(SceneFormatError):
        read_scene(path)


def test_page_record_arithmetic(small_bundle):
    scene = small_bundle.scene
    size = scene.page_size
    pages = scene.page_count
    assert scene.level_record_count(0) == size
    assert scene.level_record_count(1) == size // 2
    # level blocks are contiguous and in level order
    a, b = scene.page_record_range(0, 1)
    assert (a, b) == (0, size)
    a, b = scene.page_record_range(0, pages)
    assert b == pages * size
    a2, _ = scene.page_record_range(1, 1)
    assert a2 == pages * size
    total = sum(pages * scene.level_record_count(k) for k in range(scene.lod_levels))
    assert scene.total_records() == total
    assert len(scene.gaussians) == total


def test_validate_rejects_bad_face_index(records):
    scene = raw_scene(records)
    scene.vertices = np.zeros((2, 3), dtype=np.float32)
    scene.faces = np.array([[0, 1, 5]], dtype=np.uint32)
    scene.face_page = np.zeros(1, dtype=np.uint32)
    with pytest.raises(SceneFormatError):
        scene.validate()


def test_validate_rejects_bad_record_width(records):
    scene = raw_scene(records)
    scene.gaussians = np.zeros((4, RECORD_SIZE - 1), dtype=np.float32)
    with pytest.raises(SceneFormatError):
        scene.validate()


def test_bounding_cube_contains_all_points(records):
    center, half = bounding_cube(records)
    rel = np.abs(records[:, 0:3] - np.asarray(center))
    assert rel.max() <= half + 1e-6


def test_unknown_stage_rejected(records):
    scene = raw_scene(records)
    scene.stage = "bogus"
    with pytest.raises(SceneFormatError):
        scene.validate()
