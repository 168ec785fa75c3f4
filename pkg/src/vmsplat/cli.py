"""Command-line front end.

Verbs: convert, mesh, page, lod, render, bench, compare. Worker count for
parallel sections comes from the VMSPLAT_THREADS environment variable.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from vmsplat.errors import DataError, InvariantViolation


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this tool reserves 2 for bad
    data, so usage problems remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _vec3(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z: {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers: {text!r}")


def _quat(text: str):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected w,x,y,z: {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers: {text!r}")


def _band(text: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected low:high: {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers: {text!r}")
    if not 0.0 <= lo < hi <= 1.0:
        raise argparse.ArgumentTypeError(f"band must satisfy 0 <= low < high <= 1: {text!r}")
    return lo, hi


def _size(text: str):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT: {text!r}")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers: {text!r}")
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("resolution must be at least 1x1")
    return w, h


_ABLATIONS = ("links", "lod", "vm")


def _ablate(text: str):
    names = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        name, eq, value = token.partition("=")
        if name not in _ABLATIONS or eq != "=" or value != "off":
            raise argparse.ArgumentTypeError(
                f"unknown ablation {token!r}; pick from links=off, lod=off, vm=off"
            )
        if name not in names:
            names.append(name)
    return names


def _session_flags(p, buffer_default=500):
    p.add_argument("--buffer-pages", type=int, default=buffer_default,
                   help="physical page table entries")
    p.add_argument("--staging-pages", type=float, default=40.0,
                   help="level-0 page copies allowed per frame")
    p.add_argument("--vis-scale", type=float, default=0.25,
                   help="visibility buffer resolution as a fraction of the frame")
    p.add_argument("--band", type=_band, default=(0.5, 0.8), metavar="LO:HI",
                   help="target page table usage band")
    p.add_argument("--step", type=float, default=0.05,
                   help="initial threshold adaptation step")
    p.add_argument("--no-lod", action="store_true", help="pin every page to level 0")
    p.add_argument("--no-links", action="store_true", help="ignore page links")


def build_parser() -> _Parser:
    parser = _Parser(prog="vmsplat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = sub.add_parser("convert", help="point file to packed scene (raw stage)")
    p.add_argument("input", help="binary 3DGS point file")
    p.add_argument("output", help="packed scene to write")
    p.add_argument("--bound", type=float, default=math.inf,
                   help="drop points outside this half-extent cube")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("mesh", help="build the proxy mesh (raw -> meshed)")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--grid", type=int, default=128, help="occupancy grid resolution")
    p.add_argument("--close", type=int, default=2, help="morphological close radius")
    p.add_argument("--open", type=int, default=1, help="morphological open radius")
    p.add_argument("--target-faces", type=int, default=2000,
                   help="simplify the isosurface down to this many faces")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("page", help="partition records into pages (meshed -> paged)")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--page-size", type=int, default=2048, help="records per page")
    p.add_argument("--samples", type=int, default=32,
                   help="link-discovery samples per record")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--link-threshold", type=int, default=1,
                   help="cross-page samples needed to create a link")
    p.set_defaults(func=cmd_page)

    p = sub.add_parser("lod", help="append coarser record levels (paged -> full)")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--levels", type=int, default=4, help="total level count")
    p.add_argument("--scale-factor", type=float, default=2.0 ** (1.0 / 3.0),
                   help="scale growth applied to merged records")
    p.add_argument("--kmeans-iters", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_lod)

    p = sub.add_parser("render", help="render one frame to an image file")
    p.add_argument("scene")
    p.add_argument("output", help="image path (.png; .ppm when --bits 16)")
    p.add_argument("--pos", type=_vec3, default=(0.0, 0.0, 0.0), metavar="X,Y,Z")
    p.add_argument("--quat", type=_quat, default=(1.0, 0.0, 0.0, 0.0),
                   metavar="W,X,Y,Z")
    p.add_argument("--fov", type=float, default=90.0, help="vertical FOV, degrees")
    p.add_argument("--size", type=_size, default=(256, 256), metavar="WxH")
    p.add_argument("--near", type=float, default=0.05)
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.add_argument("--no-vm", action="store_true",
                   help="render every level-0 record, no page table")
    p.add_argument("--warm", type=int, default=8,
                   help="repeat the frame this many times so streaming settles")
    _session_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="replay a camera path and emit reports")
    p.add_argument("scene")
    p.add_argument("--path", required=True, help="camera path file")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--frames", type=int, default=0,
                   help="cap the frame count (0 = whole path)")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    p.add_argument("--no-images", action="store_true", help="skip frame files")
    p.add_argument("--ablate", type=_ablate, default=[],
                   metavar="links=off,lod=off,vm=off",
                   help="extra runs with one feature disabled each")
    _session_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="PSNR and SSIM between two frame images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--json", action="store_true", dest="as_json")
    p.set_defaults(func=cmd_compare)

    return parser


# -- verb implementations -----------------------------------------------------


def cmd_convert(args) -> int:
    from vmsplat.pipeline import raw_scene
    from vmsplat.scene_io import load_input_scene, write_scene

    records = load_input_scene(args.input, bounding_half_extent=args.bound)
    scene = raw_scene(records)
    write_scene(scene, args.output)
    print(f"{args.output}: {len(records)} records, half extent {scene.half_extent:.3f}")
    return 0


def cmd_mesh(args) -> int:
    from vmsplat.pipeline import mesh_stage
    from vmsplat.scene_io import read_scene, write_scene

    scene = read_scene(args.input)
    scene = mesh_stage(
        scene,
        grid=args.grid,
        close_radius=args.close,
        open_radius=args.open,
        target_faces=args.target_faces,
    )
    write_scene(scene, args.output)
    print(f"{args.output}: {len(scene.vertices)} vertices, {len(scene.faces)} faces")
    return 0


def cmd_page(args) -> int:
    from vmsplat.pipeline import page_stage
    from vmsplat.scene_io import read_scene, write_scene

    scene = read_scene(args.input)
    scene = page_stage(
        scene,
        page_size=args.page_size,
        samples_per_gaussian=args.samples,
        seed=args.seed,
        link_threshold=args.link_threshold,
    )
    write_scene(scene, args.output)
    links = len(scene.link_targets)
    print(f"{args.output}: {scene.page_count} pages of {scene.page_size}, {links} links")
    return 0


def cmd_lod(args) -> int:
    from vmsplat.pipeline import lod_stage
    from vmsplat.scene_io import read_scene, write_scene

    scene = read_scene(args.input)
    scene = lod_stage(
        scene,
        level_count=args.levels,
        scale_factor=args.scale_factor,
        kmeans_iters=args.kmeans_iters,
        seed=args.seed,
    )
    write_scene(scene, args.output)
    print(f"{args.output}: {scene.lod_levels} levels, {len(scene.gaussians)} records")
    return 0


def _camera_from_args(args):
    from vmsplat.render import Camera

    w, h = args.size
    return Camera(
        position=args.pos,
        orientation=args.quat,
        fov_y=math.radians(args.fov),
        width=w,
        height=h,
        near=args.near,
    )


def cmd_render(args) -> int:
    from vmsplat.harness import write_frame
    from vmsplat.render import render_records
    from vmsplat.runtime import VmSession
    from vmsplat.scene_io import read_scene

    scene = read_scene(args.scene, mmap_gaussians=True)
    camera = _camera_from_args(args)
    if args.no_vm or scene.page_count == 0:
        if scene.page_count:
            records = np.asarray(scene.gaussians[: scene.page_count * scene.page_size])
        else:
            records = np.asarray(scene.gaussians)
        image = render_records(records, camera)
        missing = 0
    else:
        session = VmSession(
            scene,
            buffer_pages=args.buffer_pages,
            staging_pages=args.staging_pages,
            vis_scale=args.vis_scale,
            band=args.band,
            step=args.step,
            lod_enabled=not args.no_lod,
            links_enabled=not args.no_links,
        )
        stats = {}
        image = None
        for i in range(max(1, args.warm)):
            image, stats = session.render_frame(camera, i)
        missing = stats["missing_pages"]
    write_frame(Path(args.output), image, bits=args.bits)
    print(f"{args.output}: {camera.width}x{camera.height}, missing pages {missing}")
    return 0


def cmd_bench(args) -> int:
    from vmsplat.camera_path import load_path
    from vmsplat.harness import (
        BenchConfig,
        emit_reports,
        frame_name,
        run_benchmark,
        write_frame,
    )
    from vmsplat.scene_io import read_scene

    scene = read_scene(args.scene, mmap_gaussians=True)
    path = load_path(args.path)
    base = BenchConfig(
        buffer_pages=args.buffer_pages,
        staging_pages=args.staging_pages,
        vis_scale=args.vis_scale,
        band=args.band,
        step=args.step,
        lod=not args.no_lod,
        links=not args.no_links,
        frame_limit=args.frames,
    )
    runs = [("base", Path(args.out), base)]
    for name in args.ablate:
        cfg = dataclasses.replace(base, **{name: False})
        runs.append((f"{name}=off", Path(args.out) / f"ablate_{name}", cfg))

    for name, out_dir, cfg in runs:
        sink = None
        if not args.no_images:
            frames_dir = out_dir / "frames"
            frames_dir.mkdir(parents=True, exist_ok=True)

            def sink(i, image, _dir=frames_dir):
                write_frame(_dir / frame_name(i, args.bits), image, bits=args.bits)

        stats = run_benchmark(scene, path, cfg, frame_sink=sink)
        summary = emit_reports(stats, out_dir)
        med = summary["stage_medians_s"]
        print(
            f"{name}: {len(stats)} frames, median update/sort/render "
            f"{med['update'] * 1e3:.2f}/{med['sort'] * 1e3:.2f}/{med['render'] * 1e3:.2f} ms, "
            f"missing total {sum(fs.missing for fs in stats)}"
        )
    return 0


def _load_image(path) -> np.ndarray:
    """Frame file to float (h, w, 3) in [0, 1]. PNG through Pillow; the
    16-bit PPM variant written by this tool is parsed directly."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        blob = path.read_bytes()
        parts = blob.split(maxsplit=4)
        if len(parts) < 5 or parts[0] != b"P6":
            raise DataError(f"{path}: not a binary PPM")
        try:
            w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            raise DataError(f"{path}: bad PPM header")
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        expect = w * h * 3 * dtype.itemsize
        data = parts[4][:expect]
        if len(data) != expect:
            raise DataError(f"{path}: truncated PPM payload")
        arr = np.frombuffer(data, dtype=dtype).reshape(h, w, 3)
        return arr.astype(np.float64) / float(maxval)
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def cmd_compare(args) -> int:
    from vmsplat.metrics import psnr, ssim

    a = _load_image(args.image_a)
    b = _load_image(args.image_b)
    p = psnr(a, b)
    s = ssim(a, b)
    if args.as_json:
        payload = {"psnr_db": "inf" if math.isinf(p) else p, "ssim": s}
        print(json.dumps(payload))
    else:
        print(f"PSNR_dB: {'inf' if math.isinf(p) else format(p, '.4f')}")
        print(f"SSIM: {s:.6f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"vmsplat: error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"vmsplat: invariant violation: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"vmsplat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
