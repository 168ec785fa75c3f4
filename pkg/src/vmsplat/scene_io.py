"""Point-file ingest and the packed streamable scene format.

The packed file is little-endian throughout: a fixed header (magic, version,
pipeline stage), a section table of (tag, offset, length), then the
sections. Gaussian records are a flat float32 array so one page is one
contiguous byte range; page offsets are pure arithmetic over the metadata
(page_size, per-level page counts), which is what lets the runtime map the
file and copy pages without decoding.

Pipeline stages mark how far preprocessing has come: ``raw`` (flat records),
``meshed`` (+ proxy mesh), ``paged`` (+ page assignment, links, padded
records), ``full`` (+ LOD levels).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from vmsplat.errors import ParseError, SceneFormatError
from vmsplat.gaussians import RECORD_SIZE

MAGIC = b"VMSP"
VERSION = 1
STAGES = ("raw", "meshed", "paged", "full")

_PLY_PROPS = 62  # 3 pos + 3 normal + 3 dc + 45 rest + 1 opacity + 3 scale + 4 quat


def load_input_scene(path, bounding_half_extent: float = np.inf) -> np.ndarray:
    """Parse a binary 3DGS point file into (n, 59) float32 records.

    Normals are dropped, opacity is sigmoid-decoded, scale exp-decoded,
    quaternions normalized, and spherical harmonics reordered to
    coefficient-major. Points whose mean falls outside the origin-centered
    cube of the given half-extent are discarded.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    header_end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or header_end < 0:
        raise ParseError(f"{path}: not a point file (missing header)")
    header = blob[:header_end].decode("ascii", errors="replace").splitlines()
    count = None
    props = []
    fmt_ok = False
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] != "binary_little_endian":
                raise ParseError(f"{path}: unsupported format {parts[1]!r}")
            fmt_ok = True
        elif parts[0] == "element":
            if parts[1] != "vertex":
                raise ParseError(f"{path}: unexpected element {parts[1]!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            if parts[1] != "float":
                raise ParseError(f"{path}: non-float property {parts[2]!r}")
            props.append(parts[2])
    if not fmt_ok or count is None:
        raise ParseError(f"{path}: malformed header")
    if len(props) != _PLY_PROPS:
        raise ParseError(f"{path}: expected {_PLY_PROPS} properties, found {len(props)}")

    data = blob[header_end + len(b"end_header\n") :]
    expected = count * _PLY_PROPS * 4
    if len(data) < expected:
        raise ParseError(f"{path}: truncated body ({len(data)} of {expected} bytes)")
    raw = np.frombuffer(data, dtype="<f4", count=count * _PLY_PROPS).reshape(count, _PLY_PROPS)

    finite = np.isfinite(raw).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise ParseError(f"{path}: record {bad} has non-finite values")

    pos = raw[:, 0:3]
    f_dc = raw[:, 6:9]
    f_rest = raw[:, 9:54]
    opacity = expit(raw[:, 54].astype(np.float64)).astype(np.float32)
    scale = np.exp(raw[:, 55:58].astype(np.float64)).astype(np.float32)
    quat = raw[:, 58:62].astype(np.float64)
    norms = np.linalg.norm(quat, axis=1)
    if (norms < 1e-12).any():
        bad = int(np.flatnonzero(norms < 1e-12)[0])
        raise ParseError(f"{path}: record {bad} has a zero rotation quaternion")
    quat = (quat / norms[:, None]).astype(np.float32)

    sh = np.empty((count, 16, 3), dtype=np.float32)
    sh[:, 0, :] = f_dc
    sh[:, 1:, :] = f_rest.reshape(count, 3, 15).transpose(0, 2, 1)

    records = np.empty((count, RECORD_SIZE), dtype=np.float32)
    records[:, 0:3] = pos
    records[:, 3:7] = quat
    records[:, 7:10] = scale
    records[:, 10] = opacity
    records[:, 11:] = sh.reshape(count, 48)

    keep = (np.abs(pos) <= bounding_half_extent).all(axis=1)
    return np.ascontiguousarray(records[keep])


def bounding_cube(records: np.ndarray):
    """(center, half_extent) of the tight cube around record positions."""
    if len(records) == 0:
        return np.zeros(3, dtype=np.float32), 1.0
    pos = records[:, 0:3]
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    center = (0.5 * (lo + hi)).astype(np.float32)
    half = float(max((hi - lo).max() * 0.5, 1e-6))
    return center, half


@dataclass
class SceneFile:
    """In-memory form of the packed scene format."""

    stage: str = "raw"
    page_size: int = 0
    lod_levels: int = 0
    page_counts: list = field(default_factory=list)
    center: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    half_extent: float = 1.0
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.float32))
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.uint32))
    face_page: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint32))
    link_offsets: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.uint32))
    link_targets: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint32))
    gaussians: np.ndarray = field(
        default_factory=lambda: np.zeros((0, RECORD_SIZE), dtype=np.float32)
    )

    @property
    def page_count(self) -> int:
        return self.page_counts[0] if self.page_counts else 0

    def level_record_count(self, level: int) -> int:
        return self.page_size >> level

    def level_start_record(self, level: int) -> int:
        start = 0
        for k in range(level):
            start += self.page_counts[k] * self.level_record_count(k)
        return start

    def page_record_range(self, level: int, page_id: int):
        """Half-open record rows of one page; page ids are 1-based."""
        per = self.level_record_count(level)
        start = self.level_start_record(level) + (page_id - 1) * per
        return start, start + per

    def page_records(self, level: int, page_id: int) -> np.ndarray:
        a, b = self.page_record_range(level, page_id)
        return self.gaussians[a:b]

    def links_for_page(self, page_id: int) -> np.ndarray:
        a, b = self.link_offsets[page_id - 1], self.link_offsets[page_id]
        return self.link_targets[a:b]

    def total_records(self) -> int:
        if not self.page_counts:
            return len(self.gaussians)
        return self.level_start_record(self.lod_levels)

    def validate(self) -> None:
        if self.stage not in STAGES:
            raise SceneFormatError(f"unknown stage {self.stage!r}")
        g = self.gaussians
        if g.ndim != 2 or g.shape[1] != RECORD_SIZE:
            raise SceneFormatError(f"record array must be (n, {RECORD_SIZE}), got {g.shape}")
        nv = len(self.vertices)
        if self.faces.size and self.faces.max() >= nv:
            raise SceneFormatError("face vertex index out of range")
        if len(self.face_page) != len(self.faces):
            raise SceneFormatError("face_page length mismatch")
        n = self.page_count
        if self.face_page.size and self.face_page.max() > n:
            raise SceneFormatError("face page id exceeds page count")
        if len(self.link_offsets) != n + 1:
            raise SceneFormatError("link offset table length mismatch")
        if np.any(np.diff(self.link_offsets.astype(np.int64)) < 0):
            raise SceneFormatError("link offsets not monotone")
        if self.link_targets.size and (
            self.link_targets.min() < 1 or self.link_targets.max() > n
        ):
            raise SceneFormatError("link target out of range")
        if self.page_counts:
            if self.page_size <= 0:
                raise SceneFormatError("paged scene requires positive page_size")
            if self.page_size % (1 << (self.lod_levels - 1)) != 0:
                raise SceneFormatError("page_size not divisible by 2^(levels-1)")
            if len(self.gaussians) != self.total_records():
                raise SceneFormatError("gaussian section size mismatch")


def _pack_meta(scene: SceneFile) -> bytes:
    head = struct.pack(
        "<IIQ3ff",
        scene.page_size,
        scene.lod_levels,
        len(scene.gaussians),
        *[float(c) for c in scene.center],
        scene.half_extent,
    )
    counts = struct.pack(f"<{len(scene.page_counts)}I", *scene.page_counts)
    return head + counts


def _unpack_meta(buf: bytes, scene: SceneFile) -> int:
    base = struct.calcsize("<IIQ3ff")
    page_size, lod_levels, gcount, cx, cy, cz, half = struct.unpack("<IIQ3ff", buf[:base])
    scene.page_size = page_size
    scene.lod_levels = lod_levels
    scene.center = np.array([cx, cy, cz], dtype=np.float32)
    scene.half_extent = half
    scene.page_counts = list(struct.unpack(f"<{lod_levels}I", buf[base : base + 4 * lod_levels]))
    return gcount


def write_scene(scene: SceneFile, path) -> None:
    scene.validate()
    sections = [
        (b"META", _pack_meta(scene)),
        (b"VERT", struct.pack("<Q", len(scene.vertices))
         + np.ascontiguousarray(scene.vertices, dtype="<f4").tobytes()),
        (b"FACE", struct.pack("<Q", len(scene.faces))
         + np.ascontiguousarray(scene.faces, dtype="<u4").tobytes()),
        (b"FPAG", struct.pack("<Q", len(scene.face_page))
         + np.ascontiguousarray(scene.face_page, dtype="<u4").tobytes()),
        (b"LINK", struct.pack("<Q", len(scene.link_targets))
         + np.ascontiguousarray(scene.link_offsets, dtype="<u4").tobytes()
         + np.ascontiguousarray(scene.link_targets, dtype="<u4").tobytes()),
        (b"GAUS", np.ascontiguousarray(scene.gaussians, dtype="<f4").tobytes()),
    ]
    header_size = 4 + 4 + 4 + 4 + len(sections) * (4 + 8 + 8)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<B3x", STAGES.index(scene.stage))
    out += struct.pack("<I", len(sections))
    offset = header_size
    for tag, payload in sections:
        out += tag + struct.pack("<QQ", offset, len(payload))
        offset += len(payload)
    for _, payload in sections:
        out += payload
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def _counted_array(buf: bytes, dtype, cols, path, tag):
    (count,) = struct.unpack_from("<Q", buf, 0)
    data = np.frombuffer(buf, dtype=dtype, count=count * cols, offset=8)
    if 8 + data.nbytes != len(buf):
        raise SceneFormatError(f"{path}: section {tag} length mismatch")
    return data.reshape(count, cols) if cols > 1 else data


def read_scene(path, mmap_gaussians: bool = False) -> SceneFile:
    """Load a packed scene. With ``mmap_gaussians`` the record array is a
    read-only memory map, so record bytes are paged in on demand; every
    other section is read eagerly (they are small)."""
    with open(path, "rb") as fh:
        fh.seek(0, 2)
        file_size = fh.tell()
        fh.seek(0)
        head = fh.read(16)
        if len(head) < 16 or head[:4] != MAGIC:
            raise SceneFormatError(f"{path}: bad magic")
        version, stage_idx, nsec = struct.unpack("<IB3xI", head[4:])
        if version != VERSION:
            raise SceneFormatError(f"{path}: unsupported version {version}")
        if stage_idx >= len(STAGES):
            raise SceneFormatError(f"{path}: unknown stage byte {stage_idx}")
        table = {}
        raw_table = fh.read(nsec * 20)
        for i in range(nsec):
            tag = raw_table[i * 20 : i * 20 + 4]
            off, length = struct.unpack_from("<QQ", raw_table, i * 20 + 4)
            if off + length > file_size:
                raise SceneFormatError(f"{path}: section {tag!r} extends past end of file")
            table[tag] = (off, length)
        for tag in (b"META", b"VERT", b"FACE", b"FPAG", b"LINK", b"GAUS"):
            if tag not in table:
                raise SceneFormatError(f"{path}: missing section {tag!r}")

        def section(tag: bytes) -> bytes:
            off, length = table[tag]
            fh.seek(off)
            return fh.read(length)

        scene = SceneFile(stage=STAGES[stage_idx])
        gcount = _unpack_meta(section(b"META"), scene)
        scene.vertices = _counted_array(section(b"VERT"), "<f4", 3, path, "VERT")
        scene.faces = _counted_array(section(b"FACE"), "<u4", 3, path, "FACE")
        scene.face_page = _counted_array(section(b"FPAG"), "<u4", 1, path, "FPAG")

        buf = section(b"LINK")
        (ntargets,) = struct.unpack_from("<Q", buf, 0)
        noffsets = scene.page_count + 1
        if len(buf) != 8 + 4 * (noffsets + ntargets):
            raise SceneFormatError(f"{path}: LINK section length mismatch")
        scene.link_offsets = np.frombuffer(buf, dtype="<u4", count=noffsets, offset=8)
        scene.link_targets = np.frombuffer(
            buf, dtype="<u4", count=ntargets, offset=8 + 4 * noffsets
        )

        off, length = table[b"GAUS"]
        if length != gcount * RECORD_SIZE * 4:
            raise SceneFormatError(f"{path}: GAUS section length mismatch")
        if mmap_gaussians:
            scene.gaussians = np.memmap(
                path, dtype="<f4", mode="r", offset=off, shape=(gcount, RECORD_SIZE)
            )
        else:
            scene.gaussians = np.frombuffer(section(b"GAUS"), dtype="<f4").reshape(
                gcount, RECORD_SIZE
            )
    scene.validate()
    return scene


def save_mesh_obj(mesh, path) -> None:
    """Debug dump of a triangle mesh in the common text interchange format."""
    with open(path, "w") as fh:
        for v in np.asarray(mesh.vertices, dtype=np.float64):
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in np.asarray(mesh.faces, dtype=np.int64):
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
