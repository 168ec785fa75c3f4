"""Scripted-path benchmark driver.

Replays a camera path against a paged scene, records per-frame streaming
and timing stats, and emits report files: stats.csv (deterministic
counters), timings.csv (wall-clock stage durations), summary.json
(schema-checked), and one lossless raster per frame.

Counters and durations live in separate CSVs on purpose: two identical
runs must produce byte-identical stats and frames, and wall-clock times
never replay exactly.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
from PIL import Image

from vmsplat.errors import DataError, InvariantViolation
from vmsplat.runtime import VmSession

STAGES = ("visibility", "reduce", "update", "copy", "sort", "render")

MEDIAN_FRAME_NOTE = "The median frame is not an actual frame"


@dataclass(frozen=True)
class FrameStats:
    """Everything recorded about one benchmark frame.

    ``resident_per_level[k]`` counts virtual pages resident at LOD level k
    after the frame's copies. ``durations`` holds seconds per stage, keyed
    by ``STAGES``. ``thresholds`` snapshots the LOD distance cutoffs after
    this frame's adaptation (empty when the run has no controller).
    """

    frame: int
    required: int
    missing: int
    bytes_copied: int
    usage: float
    resident_per_level: tuple
    thresholds: tuple
    durations: dict

    def __post_init__(self):
        if self.missing > self.required:
            raise InvariantViolation(
                f"frame {self.frame}: missing {self.missing} > required {self.required}"
            )
        if set(self.durations) != set(STAGES):
            raise InvariantViolation(f"frame {self.frame}: bad stage keys")
        for name, value in self.durations.items():
            if value < 0:
                raise InvariantViolation(f"frame {self.frame}: {name} duration < 0")

    @property
    def resident(self) -> int:
        return int(sum(self.resident_per_level))

    @property
    def total_time(self) -> float:
        return float(sum(self.durations.values()))


def level0_equivalents(stats: FrameStats) -> float:
    """Resident footprint in level-0 page units (a level-k page counts 1/2^k)."""
    return sum(c / float(1 << k) for k, c in enumerate(stats.resident_per_level))


@dataclass(frozen=True)
class BenchConfig:
    """Knobs for one benchmark run. ``vm=False`` bypasses the page table and
    renders every level-0 record each frame (the baseline ablation)."""

    buffer_pages: int = 500
    staging_pages: float = 40.0
    vis_scale: float = 0.25
    band: tuple = (0.5, 0.8)
    step: float = 0.05
    lod: bool = True
    links: bool = True
    vm: bool = True
    frame_limit: int = 0  # 0 = the whole path


def _frame_count(path, config: BenchConfig) -> int:
    n = path.frame_count
    if config.frame_limit > 0:
        n = min(n, config.frame_limit)
    return n


def run_benchmark(scene, path, config: BenchConfig = None, frame_sink=None):
    """Replay ``path`` over ``scene`` and return a list of FrameStats.

    ``frame_sink(frame_index, image)``, when given, receives every rendered
    frame; images are not retained otherwise, so long paths stay cheap.
    """
    from vmsplat.render import composite_ordered, depth_order

    config = config or BenchConfig()
    if scene.page_count == 0:
        raise DataError("benchmark needs a paged scene")
    n = _frame_count(path, config)
    out = []
    if not config.vm:
        # Baseline: no table, no streaming. Stage times for the skipped
        # stages are reported as zero, which keeps the CSV schema uniform.
        records = np.asarray(scene.gaussians[: scene.page_count * scene.page_size])
        resident = (scene.page_count,) + (0,) * (scene.lod_levels - 1)
        for i in range(n):
            cam = path.frame_camera(i)
            t0 = time.perf_counter()
            order = depth_order(records, cam)
            t1 = time.perf_counter()
            image = composite_ordered(records, order, cam)
            t2 = time.perf_counter()
            stats = FrameStats(
                frame=i,
                required=scene.page_count,
                missing=0,
                bytes_copied=0,
                usage=1.0,
                resident_per_level=resident,
                thresholds=(),
                durations={
                    "visibility": 0.0,
                    "reduce": 0.0,
                    "update": 0.0,
                    "copy": 0.0,
                    "sort": t1 - t0,
                    "render": t2 - t1,
                },
            )
            if frame_sink is not None:
                frame_sink(i, image)
            out.append(stats)
        return out

    session = VmSession(
        scene,
        buffer_pages=config.buffer_pages,
        staging_pages=config.staging_pages,
        vis_scale=config.vis_scale,
        band=config.band,
        step=config.step,
        lod_enabled=config.lod,
        links_enabled=config.links,
    )
    for i in range(n):
        cam = path.frame_camera(i)
        image, raw = session.render_frame(cam, i)
        stats = FrameStats(
            frame=i,
            required=raw["required_pages"],
            missing=raw["missing_pages"],
            bytes_copied=raw["bytes_copied"],
            usage=raw["usage"],
            resident_per_level=raw["resident_per_level"],
            thresholds=raw["thresholds"],
            durations={
                "visibility": raw["time_visibility"],
                "reduce": raw["time_reduce"],
                "update": raw["time_update"],
                "copy": raw["time_copy"],
                "sort": raw["time_sort"],
                "render": raw["time_render"],
            },
        )
        if frame_sink is not None:
            frame_sink(i, image)
        out.append(stats)
    return out


# -- frame images -----------------------------------------------------------


def write_frame(path, image: np.ndarray, bits: int = 8) -> None:
    """Dump one frame losslessly. Linear [0, 1] values scale straight to the
    integer range; no gamma is applied. 8-bit writes PNG; 16-bit writes a
    binary PPM (P6, maxval 65535, big-endian) because 48-bit RGB PNG support
    is spotty across readers."""
    path = Path(path)
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected (h, w, 3) image, got {arr.shape}")
    if bits == 8:
        data = np.round(arr * 255.0).astype(np.uint8)
        Image.fromarray(data, "RGB").save(path, format="PNG")
    elif bits == 16:
        data = np.round(arr * 65535.0).astype(">u2")
        h, w = arr.shape[:2]
        header = f"P6\n{w} {h}\n65535\n".encode("ascii")
        path.write_bytes(header + data.tobytes())
    else:
        raise DataError(f"bits must be 8 or 16, got {bits}")


def frame_name(index: int, bits: int = 8) -> str:
    ext = "png" if bits == 8 else "ppm"
    return f"frame_{index:05d}.{ext}"


# -- report files -------------------------------------------------------------

_STAGE_TIMES_SCHEMA = {
    "type": "object",
    "properties": {s: {"type": "number", "minimum": 0} for s in STAGES},
    "required": list(STAGES),
    "additionalProperties": False,
}

_REAL_FRAME_SCHEMA = {
    "type": "object",
    "properties": {
        "frame": {"type": "integer", "minimum": 0},
        "durations_s": _STAGE_TIMES_SCHEMA,
        "total_s": {"type": "number", "minimum": 0},
        "resident_pages": {"type": "integer", "minimum": 0},
        "required_pages": {"type": "integer", "minimum": 0},
        "missing_pages": {"type": "integer", "minimum": 0},
        "bytes_copied": {"type": "integer", "minimum": 0},
    },
    "required": [
        "frame",
        "durations_s",
        "total_s",
        "resident_pages",
        "required_pages",
        "missing_pages",
        "bytes_copied",
    ],
    "additionalProperties": False,
}

_MEDIAN_FRAME_SCHEMA = {
    "type": "object",
    "properties": {
        "note": {"const": MEDIAN_FRAME_NOTE},
        "durations_s": _STAGE_TIMES_SCHEMA,
        "total_s": {"type": "number", "minimum": 0},
    },
    "required": ["note", "durations_s", "total_s"],
    "additionalProperties": False,
}

SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "frame_count": {"type": "integer", "minimum": 1},
        "timer": {
            "type": "object",
            "properties": {
                "clock": {"type": "string"},
                "resolution_s": {"type": "number", "minimum": 0},
            },
            "required": ["clock", "resolution_s"],
            "additionalProperties": False,
        },
        "stage_medians_s": _STAGE_TIMES_SCHEMA,
        "frames": {
            "type": "object",
            "properties": {
                "most_pages": _REAL_FRAME_SCHEMA,
                "median": _MEDIAN_FRAME_SCHEMA,
                "shortest": _REAL_FRAME_SCHEMA,
                "largest_transfer": _REAL_FRAME_SCHEMA,
            },
            "required": ["most_pages", "median", "shortest", "largest_transfer"],
            "additionalProperties": False,
        },
    },
    "required": ["frame_count", "timer", "stage_medians_s", "frames"],
    "additionalProperties": False,
}


def _frame_entry(fs: FrameStats) -> dict:
    return {
        "frame": fs.frame,
        "durations_s": {s: fs.durations[s] for s in STAGES},
        "total_s": fs.total_time,
        "resident_pages": fs.resident,
        "required_pages": fs.required,
        "missing_pages": fs.missing,
        "bytes_copied": fs.bytes_copied,
    }


def build_summary(stats) -> dict:
    """Aggregate FrameStats into the summary dict (see SUMMARY_SCHEMA).

    Exemplars: the frame holding the most physical pages, the one with the
    smallest stage-time sum, the one that copied the most bytes, and a
    synthetic "median" frame assembled from per-stage medians. Ties go to
    the earliest frame.
    """
    stats = list(stats)
    if not stats:
        raise DataError("summary needs at least one frame")
    medians = {s: float(statistics.median(fs.durations[s] for fs in stats)) for s in STAGES}
    most = max(stats, key=lambda fs: fs.resident)
    shortest = min(stats, key=lambda fs: fs.total_time)
    largest = max(stats, key=lambda fs: fs.bytes_copied)
    return {
        "frame_count": len(stats),
        "timer": {
            "clock": "time.perf_counter",
            "resolution_s": float(time.get_clock_info("perf_counter").resolution),
        },
        "stage_medians_s": medians,
        "frames": {
            "most_pages": _frame_entry(most),
            "median": {
                "note": MEDIAN_FRAME_NOTE,
                "durations_s": medians,
                "total_s": float(sum(medians.values())),
            },
            "shortest": _frame_entry(shortest),
            "largest_transfer": _frame_entry(largest),
        },
    }


def _stats_rows(stats):
    levels = len(stats[0].resident_per_level)
    header = ["frame", "required", "missing", "bytes_copied", "usage"]
    header += [f"resident_l{k}" for k in range(levels)]
    header += ["thresholds"]
    yield header
    for fs in stats:
        if len(fs.resident_per_level) != levels:
            raise InvariantViolation("per-level resident width changed mid-run")
        row = [str(fs.frame), str(fs.required), str(fs.missing), str(fs.bytes_copied)]
        row.append(repr(float(fs.usage)))
        row += [str(c) for c in fs.resident_per_level]
        row.append(";".join(repr(float(t)) for t in fs.thresholds))
        yield row


def _timings_rows(stats):
    yield ["frame"] + [f"{s}_s" for s in STAGES]
    for fs in stats:
        yield [str(fs.frame)] + [repr(float(fs.durations[s])) for s in STAGES]


def _write_csv(path, rows):
    # newline="" so csv controls line endings; \n keeps files byte-stable
    # across platforms.
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow(row)


def emit_reports(stats, out_dir) -> dict:
    """Write stats.csv, timings.csv, and summary.json under ``out_dir``.

    The summary is validated against SUMMARY_SCHEMA before it is written;
    a failure raises rather than producing a malformed report. Returns the
    summary dict.
    """
    stats = list(stats)
    if not stats:
        raise DataError("no frames to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "stats.csv", _stats_rows(stats))
    _write_csv(out / "timings.csv", _timings_rows(stats))
    summary = build_summary(stats)
    try:
        jsonschema.validate(summary, SUMMARY_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InvariantViolation(f"summary failed its schema: {exc.message}") from exc
    text = json.dumps(summary, indent=2, sort_keys=True)
    (out / "summary.json").write_text(text + "\n")
    return summary
