"""Benchmark driver: per-frame stats, report files, exemplar selection."""

import csv
import hashlib
import json
import statistics

import jsonschema
import numpy as np
import pytest

from vmsplat.camera_path import CameraPath, Checkpoint
from vmsplat.cli import _load_image
from vmsplat.errors import DataError, InvariantViolation
from vmsplat.harness import (
    STAGES,
    BenchConfig,
    FrameStats,
    SUMMARY_SCHEMA,
    build_summary,
    emit_reports,
    frame_name,
    level0_equivalents,
    run_benchmark,
    write_frame,
)

IDENT = (1.0, 0.0, 0.0, 0.0)


def _durations(**kw):
    out = {s: 0.001 for s in STAGES}
    out.update(kw)
    return out


def _fs(frame=0, required=5, missing=0, bytes_copied=0, usage=0.5,
        resident=(5,), thresholds=(), durations=None):
    return FrameStats(
        frame=frame,
        required=required,
        missing=missing,
        bytes_copied=bytes_copied,
        usage=usage,
        resident_per_level=resident,
        thresholds=thresholds,
        durations=durations or _durations(),
    )


def _recede_path(z0=-2.0, z1=-10.0, fps=10.0, speed=2.0, size=96):
    cps = (
        Checkpoint(position=(0.0, 0.0, z0), orientation=IDENT),
        Checkpoint(position=(0.0, 0.0, z1), orientation=IDENT),
    )
    return CameraPath(checkpoints=cps, speed=speed, fps=fps, fov_deg=90.0,
                      width=size, height=size)


# -- FrameStats ----------------------------------------------------------------


def test_stats_reject_missing_above_required():
    with pytest.raises(InvariantViolation):
        _fs(required=2, missing=3)


def test_stats_reject_bad_stage_keys():
    d = _durations()
    d.pop("sort")
    with pytest.raises(InvariantViolation):
        _fs(durations=d)
    with pytest.raises(InvariantViolation):
        _fs(durations=dict(_durations(), extra=0.0))


def test_stats_reject_negative_duration():
    with pytest.raises(InvariantViolation):
        _fs(durations=_durations(copy=-1e-9))


def test_level0_equivalents_halves_per_level():
    fs = _fs(resident=(4, 2, 1))
    assert level0_equivalents(fs) == pytest.approx(4 + 1 + 0.25)
    assert fs.resident == 7


# -- run_benchmark -------------------------------------------------------------


def test_row_count_matches_path_frames(small_bundle):
    path = _recede_path(fps=5.0)  # duration 4 s -> 21 frames
    stats = run_benchmark(small_bundle.scene, path, BenchConfig(buffer_pages=30))
    assert len(stats) == path.frame_count == 21
    assert [fs.frame for fs in stats] == list(range(21))


def test_frame_limit_truncates(small_bundle):
    path = _recede_path(fps=10.0)
    cfg = BenchConfig(buffer_pages=30, frame_limit=4)
    stats = run_benchmark(small_bundle.scene, path, cfg)
    assert len(stats) == 4


def test_vm_off_keeps_everything_resident(small_bundle):
    scene = small_bundle.scene
    cfg = BenchConfig(vm=False, frame_limit=3)
    stats = run_benchmark(scene, _recede_path(), cfg)
    for fs in stats:
        assert fs.resident_per_level[0] == scene.page_count
        assert sum(fs.resident_per_level[1:]) == 0
        assert fs.missing == 0
        assert fs.usage == 1.0
        assert fs.thresholds == ()


def test_links_only_add_required_pages(small_bundle):
    path = _recede_path(fps=5.0, z1=-6.0)
    on = run_benchmark(small_bundle.scene, path,
                       BenchConfig(buffer_pages=30, lod=False, links=True))
    off = run_benchmark(small_bundle.scene, path,
                        BenchConfig(buffer_pages=30, lod=False, links=False))
    assert all(a.required >= b.required for a, b in zip(on, off))
    assert sum(a.required for a in on) > sum(b.required for b in off)


def test_lod_never_exceeds_flat_footprint(small_bundle):
    path = _recede_path(z0=-3.0, z1=-20.0, fps=5.0)
    on = run_benchmark(small_bundle.scene, path, BenchConfig(buffer_pages=12, lod=True))
    off = run_benchmark(small_bundle.scene, path, BenchConfig(buffer_pages=12, lod=False))
    for a, b in zip(on, off):
        assert level0_equivalents(a) <= level0_equivalents(b) + 1e-9


def test_frame_sink_sees_every_frame(small_bundle):
    seen = []
    cfg = BenchConfig(buffer_pages=30, frame_limit=3)
    run_benchmark(small_bundle.scene, _recede_path(), cfg,
                  frame_sink=lambda i, img: seen.append((i, img.shape)))
    assert seen == [(0, (96, 96, 3)), (1, (96, 96, 3)), (2, (96, 96, 3))]


def test_unpaged_scene_rejected():
    from vmsplat.pipeline import raw_scene
    from vmsplat.synthetic import wall_scene

    raw = raw_scene(wall_scene(seed=2, count=40, extent=1.0, z=3.0))
    with pytest.raises(DataError):
        run_benchmark(raw, _recede_path())


# -- summary -------------------------------------------------------------------


def test_median_is_middle_element():
    stats = [
        _fs(frame=0, durations=_durations(render=0.009)),
        _fs(frame=1, durations=_durations(render=0.001)),
        _fs(frame=2, durations=_durations(render=0.002)),
    ]
    summary = build_summary(stats)
    assert summary["stage_medians_s"]["render"] == 0.002
    assert summary["frames"]["median"]["durations_s"]["render"] == 0.002


def test_exemplar_selection_and_ties():
    stats = [
        _fs(frame=0, resident=(3,), bytes_copied=100, durations=_durations(render=0.005)),
        _fs(frame=1, resident=(9,), bytes_copied=700, durations=_durations(render=0.001)),
        _fs(frame=2, resident=(9,), bytes_copied=700, durations=_durations(render=0.001)),
    ]
    summary = build_summary(stats)
    frames = summary["frames"]
    assert frames["most_pages"]["frame"] == 1  # tie with 2: earliest wins
    assert frames["shortest"]["frame"] == 1
    assert frames["largest_transfer"]["frame"] == 1
    assert frames["median"]["note"]
    assert "frame" not in frames["median"]  # synthetic, not an actual frame


def test_summary_needs_frames():
    with pytest.raises(DataError):
        build_summary([])


# -- reports -------------------------------------------------------------------


def test_emit_reports_files_and_schema(small_bundle, tmp_path):
    cfg = BenchConfig(buffer_pages=30, frame_limit=5)
    stats = run_benchmark(small_bundle.scene, _recede_path(), cfg)
    summary = emit_reports(stats, tmp_path)
    for name in ("stats.csv", "timings.csv", "summary.json"):
        assert (tmp_path / name).is_file()
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk == summary

    with open(tmp_path / "stats.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 5
    levels = small_bundle.scene.lod_levels
    assert rows[0] == (
        ["frame", "required", "missing", "bytes_copied", "usage"]
        + [f"resident_l{k}" for k in range(levels)]
        + ["thresholds"]
    )


def test_single_frame_run(small_bundle, tmp_path):
    cfg = BenchConfig(buffer_pages=30, frame_limit=1)
    stats = run_benchmark(small_bundle.scene, _recede_path(), cfg)
    summary = emit_reports(stats, tmp_path)
    assert summary["frame_count"] == 1
    with open(tmp_path / "stats.csv", newline="") as fh:
        assert len(list(csv.reader(fh))) == 2


def test_median_frame_matches_timings_csv(small_bundle, tmp_path):
    cfg = BenchConfig(buffer_pages=30, frame_limit=7)
    stats = run_benchmark(small_bundle.scene, _recede_path(), cfg)
    summary = emit_reports(stats, tmp_path)
    with open(tmp_path / "timings.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for stage in STAGES:
        recomputed = statistics.median(float(r[f"{stage}_s"]) for r in rows)
        assert summary["frames"]["median"]["durations_s"][stage] == recomputed


def test_stats_and_frames_are_deterministic(small_bundle, tmp_path):
    def run(tag):
        out = tmp_path / tag
        out.mkdir()
        cfg = BenchConfig(buffer_pages=20, frame_limit=6)
        digests = {}

        def sink(i, img):
            write_frame(out / frame_name(i), img)
            digests[i] = hashlib.sha256((out / frame_name(i)).read_bytes()).hexdigest()

        stats = run_benchmark(small_bundle.scene, _recede_path(), cfg, frame_sink=sink)
        emit_reports(stats, out)
        digests["stats.csv"] = hashlib.sha256((out / "stats.csv").read_bytes()).hexdigest()
        return digests

    assert run("a") == run("b")


# -- frame files ---------------------------------------------------------------


def test_frame_names():
    assert frame_name(0) == "frame_00000.png"
    assert frame_name(12, bits=16) == "frame_00012.ppm"


def test_write_frame_8bit_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (24, 32, 3)).astype(np.float64) / 255.0
    f = tmp_path / "frame_00000.png"
    write_frame(f, img, bits=8)
    back = _load_image(f)
    assert np.array_equal(back, (img * 255.0).round() / 255.0)


def test_write_frame_16bit_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 65536, (16, 16, 3)).astype(np.float64) / 65535.0
    f = tmp_path / "frame_00000.ppm"
    write_frame(f, img, bits=16)
    raw = f.read_bytes()
    assert raw.startswith(b"P6")
    assert b"65535" in raw.split(b"\n", 3)[2]
    back = _load_image(f)
    assert np.allclose(back, img, atol=1e-9)
    assert psnr_like_exact(back, img)


def psnr_like_exact(a, b):
    return np.array_equal((a * 65535).round(), (b * 65535).round())
