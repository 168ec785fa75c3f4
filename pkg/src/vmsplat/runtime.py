"""Page-table runtime: per-frame page determination, LRU replacement,
budgeted streaming, and adaptive LOD thresholds.

Frame pipeline (all deterministic given scene + camera + prior state):
visibility image -> required-page reduction -> page-table update (copy plan)
-> copy execution into the render buffer -> splat render from resident
slots -> threshold adaptation from buffer usage.

A physical page holds ``page_size`` records. An entry serving LOD level k
packs up to 2^k virtual pages, each page_size/2^k records, into its slots.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from vmsplat.errors import InvariantViolation
from vmsplat.gaussians import RECORD_SIZE

MAX_U32 = 0xFFFFFFFF


def encode_depth(d) -> int:
    """Monotone unsigned depth: strictly decreasing in distance, 0 reserved.

    Positive float32 bit patterns are order-preserving, so complementing
    them against the u32 maximum makes nearer depths larger; a max-reduce
    then keeps the closest sample.
    """
    bits = int(np.float32(d).view(np.uint32))
    return MAX_U32 - bits


def decode_depth(e: int) -> float:
    return float(np.uint32(MAX_U32 - int(e)).view(np.float32))


def encode_depth_array(d: np.ndarray) -> np.ndarray:
    bits = np.asarray(d, dtype=np.float32).view(np.uint32)
    return np.uint32(MAX_U32) - bits


@dataclass
class RequiredList:
    """Per page id (1-based; index 0 unused): encoded nearest depth, 0 when
    the page is not needed this frame, plus whether it was seen directly
    (painted a pixel) rather than only pulled through a link."""

    depths: np.ndarray
    direct: np.ndarray

    @property
    def page_count(self) -> int:
        return len(self.depths) - 1

    def required_ids(self) -> np.ndarray:
        return np.flatnonzero(self.depths).astype(np.int64)


def links_table(scene) -> list:
    """Per-page link target arrays, index = page id (0 empty)."""
    return [np.zeros(0, dtype=np.uint32)] + [
        scene.links_for_page(p) for p in range(1, scene.page_count + 1)
    ]


def reduce_visibility(page_image, depth_image, links_by_page) -> RequiredList:
    """Fold a visibility frame into the required-page list.

    Every painted page records its nearest (max-encoded) depth; each of its
    link targets inherits that same pre-propagation depth, one hop only.
    The combiner is max, so the result is independent of pixel order.
    """
    n = len(links_by_page) - 1
    flat = np.asarray(page_image).ravel().astype(np.int64)
    if flat.size and flat.max() > n:
        raise InvariantViolation(
            f"visibility page id {int(flat.max())} out of range (page count {n})"
        )
    depths = np.zeros(n + 1, dtype=np.uint32)
    direct = np.zeros(n + 1, dtype=bool)
    live = flat != 0
    if live.any():
        enc = encode_depth_array(np.asarray(depth_image).ravel()[live])
        np.maximum.at(depths, flat[live], enc)
        direct[np.unique(flat[live])] = True
        base = depths.copy()
        for p in np.flatnonzero(direct):
            for q in links_by_page[p]:
                q = int(q)
                if q != p and base[p] > depths[q]:
                    depths[q] = base[p]
    return RequiredList(depths=depths, direct=direct)


@dataclass
class LodController:
    """Distance thresholds between LOD levels plus the adaptation state."""

    thresholds: np.ndarray
    step: float = 0.05
    band_low: float = 0.5
    band_high: float = 0.8
    step_min: float = 0.005
    step_max: float = 0.5
    window: int = 30
    last_move_direction: int = 0
    last_move_frame: int = -(10**9)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        if np.any(np.diff(self.thresholds) <= 0):
            raise InvariantViolation("thresholds must be strictly increasing")

    @property
    def level_count(self) -> int:
        return len(self.thresholds) + 1


def initial_thresholds(scene_radius: float, level_count: int) -> np.ndarray:
    """Geometric spread ending at the scene radius, e.g. (r/4, r/2, r)."""
    k = level_count - 1
    return scene_radius * np.power(2.0, np.arange(k) - (k - 1), dtype=np.float64)


def select_lod(encoded_depth: int, controller: LodController) -> int:
    """Level = number of thresholds strictly below the decoded distance."""
    d = decode_depth(encoded_depth)
    return int(np.count_nonzero(controller.thresholds < d))


def adapt_thresholds(controller: LodController, usage_ratio: float, frame: int) -> None:
    """Nudge thresholds toward the target usage band, in place.

    Above the band, thresholds shrink by the step (levels drop sooner);
    below it they grow. The step itself is updated first: a move in the
    same direction as the previous one within the window compounds it by
    1%, a flip decays it by 1%.
    """
    if usage_ratio > controller.band_high:
        direction = -1
    elif usage_ratio < controller.band_low:
        direction = +1
    else:
        return
    if controller.thresholds.size == 0:
        return
    if frame - controller.last_move_frame <= controller.window:
        factor = 1.01 if direction == controller.last_move_direction else 0.99
        controller.step = float(
            np.clip(controller.step * factor, controller.step_min, controller.step_max)
        )
    controller.thresholds = controller.thresholds * (1.0 + direction * controller.step)
    controller.last_move_direction = direction
    controller.last_move_frame = frame


class PageTableEntry:
    """One physical page: LOD level (-1 = empty), LRU stamp, and virtual-page
    slots (0 = free slot); an entry at level k owns 2^k slots."""

    __slots__ = ("lod_level", "last_used_frame", "slots")

    def __init__(self):
        self.lod_level = -1
        self.last_used_frame = -1
        self.slots: list = []

    @property
    def empty(self) -> bool:
        return self.lod_level < 0

    def occupied_slots(self) -> int:
        return sum(1 for s in self.slots if s)

    def activate(self, level: int) -> None:
        self.lod_level = level
        self.slots = [0] * (1 << level)

    def clear(self) -> None:
        self.lod_level = -1
        self.slots = []


class PageTable:
    """Flat entry array plus the page-id -> (entry, slot) residency map."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvariantViolation("page table needs at least one entry")
        self.entries = [PageTableEntry() for _ in range(capacity)]
        self.resident: dict = {}

    @property
    def capacity(self) -> int:
        return len(self.entries)

    def occupied_entries(self) -> int:
        return sum(1 for e in self.entries if not e.empty)

    def usage_ratio(self) -> float:
        return self.occupied_entries() / self.capacity

    def resident_level(self, page_id: int):
        loc = self.resident.get(page_id)
        return None if loc is None else self.entries[loc[0]].lod_level

    def resident_counts(self, level_count: int) -> tuple:
        """Resident virtual-page count per LOD level, as a tuple."""
        counts = [0] * level_count
        for ei, _ in self.resident.values():
            counts[self.entries[ei].lod_level] += 1
        return tuple(counts)

    def check(self) -> None:
        """Cross-check the residency map against the entries."""
        seen = {}
        for ei, e in enumerate(self.entries):
            if e.empty:
                if e.slots:
                    raise InvariantViolation(f"empty entry {ei} has slots")
                continue
            if len(e.slots) != (1 << e.lod_level):
                raise InvariantViolation(f"entry {ei} slot count mismatch")
            for si, pid in enumerate(e.slots):
                if pid:
                    if pid in seen:
                        raise InvariantViolation(f"page {pid} resident twice")
                    seen[pid] = (ei, si)
        if seen != self.resident:
            raise InvariantViolation("residency map out of sync with entries")

    # -- allocation -------------------------------------------------------

    def _alloc_slot(self, level: int, protected: set):
        """(entry index, slot index) for one level-``level`` virtual page, or
        None when every entry is protected. Preference order: an open entry
        of the same level, then an empty entry, then evict the least
        recently used unprotected entry (ties to the lower index)."""
        for ei, e in enumerate(self.entries):
            if e.lod_level == level:
                for si, pid in enumerate(e.slots):
                    if pid == 0:
                        return ei, si
        for ei, e in enumerate(self.entries):
            if e.empty:
                e.activate(level)
                return ei, 0
        best = None
        for ei, e in enumerate(self.entries):
            if ei in protected:
                continue
            key = (e.last_used_frame, ei)
            if best is None or key < best[0]:
                best = (key, ei)
        if best is None:
            return None
        ei = best[1]
        self._evict(ei)
        self.entries[ei].activate(level)
        return ei, 0

    def _evict(self, ei: int) -> None:
        e = self.entries[ei]
        for pid in e.slots:
            if pid:
                del self.resident[pid]
        e.clear()

    def _place(self, page_id: int, ei: int, si: int, frame: int) -> None:
        old = self.resident.get(page_id)
        e = self.entries[ei]
        e.slots[si] = page_id
        e.last_used_frame = frame
        self.resident[page_id] = (ei, si)
        if old is not None and old != (ei, si):
            oe = self.entries[old[0]]
            oe.slots[old[1]] = 0
            if oe.occupied_slots() == 0:
                oe.clear()


@dataclass(frozen=True)
class PlannedCopy:
    page_id: int
    level: int
    entry: int
    slot: int


def update_page_table(
    table: PageTable,
    required: RequiredList,
    controller: LodController,
    frame: int,
    staging_budget_pages: float,
):
    """Two-pass table update. Returns (copy plan, missing page count).

    Pass 1 refreshes every entry holding a required page (any level) and
    classifies the residual work: directly visible pages first, link-pulled
    pages second, LOD-transition re-copies of already-resident pages last;
    within a class nearer pages (larger encoded depth) go first, ties to the
    lower page id. Pass 2 walks that order, allocating slots and planning
    copies until the next copy would break the staging budget (measured in
    level-0 page equivalents); it does not skip ahead. Required pages with
    no residency at any level afterwards count as missing.
    """
    ids = required.required_ids()
    protected: set = set()
    work = []  # (class, -encoded, page_id, level)
    for pid in ids:
        pid = int(pid)
        enc = int(required.depths[pid])
        level = select_lod(enc, controller)
        loc = table.resident.get(pid)
        if loc is not None:
            table.entries[loc[0]].last_used_frame = frame
            protected.add(loc[0])
            if table.entries[loc[0]].lod_level != level:
                work.append((2, -enc, pid, level))
        else:
            cls = 0 if required.direct[pid] else 1
            work.append((cls, -enc, pid, level))
    work.sort()

    plan = []
    spent = 0.0
    for cls, neg_enc, pid, level in work:
        cost = 1.0 / (1 << level)
        if spent + cost > staging_budget_pages:
            break
        got = table._alloc_slot(level, protected)
        if got is None:
            continue
        ei, si = got
        table._place(pid, ei, si, frame)
        protected.add(ei)
        plan.append(PlannedCopy(page_id=pid, level=level, entry=ei, slot=si))
        spent += cost

    missing = sum(1 for pid in ids if int(pid) not in table.resident)
    return plan, missing


class RenderBuffer:
    """Physical record storage: capacity pages of page_size records."""

    def __init__(self, capacity: int, page_size: int):
        self.page_size = page_size
        self.records = np.zeros((capacity * page_size, RECORD_SIZE), dtype=np.float32)

    def slot_rows(self, entry: int, slot: int, level: int):
        per = self.page_size >> level
        start = entry * self.page_size + slot * per
        return start, start + per


def execute_copies(plan, scene, buffer: RenderBuffer) -> int:
    """Copy planned page ranges from the scene file into buffer slots.

    Reads go through the scene's record array, which the caller opened as a
    memory map, so only touched pages are faulted in. Returns bytes copied.
    """
    total = 0
    for item in plan:
        rows = scene.page_records(item.level, item.page_id)
        a, b = buffer.slot_rows(item.entry, item.slot, item.level)
        buffer.records[a:b] = rows
        total += rows.nbytes
    return total


def gather_resident(table: PageTable, buffer: RenderBuffer) -> np.ndarray:
    """Records of all resident pages in ascending page-id order.

    Ascending id equals scene-file order, which makes a fully resident
    level-0 buffer reproduce the flat scene array record for record.
    """
    parts = []
    for pid in sorted(table.resident):
        ei, si = table.resident[pid]
        a, b = buffer.slot_rows(ei, si, table.entries[ei].lod_level)
        parts.append(buffer.records[a:b])
    if not parts:
        return np.zeros((0, RECORD_SIZE), dtype=np.float32)
    return np.concatenate(parts, axis=0)


class VmSession:
    """Owns the page table, render buffer, and controller across frames."""

    def __init__(
        self,
        scene,
        buffer_pages: int = 500,
        staging_pages: float = 40,
        vis_scale: float = 0.25,
        band=(0.5, 0.8),
        step: float = 0.05,
        lod_enabled: bool = True,
        links_enabled: bool = True,
    ):
        from vmsplat.mesh import ProxyMesh  # local import avoids cycles

        if scene.page_count == 0:
            raise InvariantViolation("scene has no pages; run paging first")
        self.scene = scene
        self.mesh = ProxyMesh(
            scene.vertices.astype(np.float64),
            scene.faces.astype(np.int32),
            scene.face_page.copy(),
        )
        self.links = (
            links_table(scene)
            if links_enabled
            else [np.zeros(0, dtype=np.uint32) for _ in range(scene.page_count + 1)]
        )
        level_count = scene.lod_levels if lod_enabled else 1
        radius = scene.half_extent * np.sqrt(3.0)  # bounding sphere of the cube
        self.controller = LodController(
            initial_thresholds(radius, level_count),
            step=step,
            band_low=band[0],
            band_high=band[1],
        )
        self.lod_enabled = lod_enabled and level_count > 1
        self.table = PageTable(buffer_pages)
        self.buffer = RenderBuffer(buffer_pages, scene.page_size)
        self.staging_pages = staging_pages
        self.vis_scale = vis_scale

    def render_frame(self, camera, frame_index: int):
        """Run one frame. Returns (image, stats dict).

        Stage order: visibility, reduce, table update, copy, threshold
        adaptation, depth sort, composite. Adaptation reads the post-copy
        usage ratio, so running it before the sort changes nothing except
        where its (tiny) cost lands in the timings.

        Stats mix deterministic counters (required/resident/missing pages,
        bytes copied, usage, LOD step) with wall-clock stage durations; the
        harness keeps those in separate output files.
        """
        from vmsplat.render import composite_ordered, depth_order, render_visibility

        t0 = time.perf_counter()
        vis_cam = camera.scaled(self.vis_scale)
        page_img, depth_img = render_visibility(self.mesh, vis_cam)
        t1 = time.perf_counter()
        required = reduce_visibility(page_img, depth_img, self.links)
        t2 = time.perf_counter()
        plan, missing = update_page_table(
            self.table, required, self.controller, frame_index, self.staging_pages
        )
        t3 = time.perf_counter()
        bytes_copied = execute_copies(plan, self.scene, self.buffer)
        t4 = time.perf_counter()
        usage = self.table.usage_ratio()
        if self.lod_enabled:
            adapt_thresholds(self.controller, usage, frame_index)
        records = gather_resident(self.table, self.buffer)
        t5 = time.perf_counter()
        order = depth_order(records, camera)
        t6 = time.perf_counter()
        image = composite_ordered(records, order, camera)
        t7 = time.perf_counter()
        stats = {
            "frame": frame_index,
            "required_pages": int(len(required.required_ids())),
            "resident_pages": int(len(self.table.resident)),
            "resident_per_level": self.table.resident_counts(self.scene.lod_levels),
            "planned_copies": len(plan),
            "missing_pages": int(missing),
            "bytes_copied": int(bytes_copied),
            "usage": usage,
            "lod_step": self.controller.step,
            "thresholds": tuple(float(t) for t in self.controller.thresholds),
            "time_visibility": t1 - t0,
            "time_reduce": t2 - t1,
            "time_update": t3 - t2,
            "time_copy": (t4 - t3) + (t5 - t4),
            "time_sort": t6 - t5,
            "time_render": t7 - t6,
        }
        return image, stats
