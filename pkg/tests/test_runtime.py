"""Streaming runtime: depth encoding, required-page reduction, page table
replacement, staging budgets, and threshold adaptation."""

import numpy as np
import pytest

from vmsplat.errors import InvariantViolation
from vmsplat.runtime import (
    LodController,
    PageTable,
    RequiredList,
    VmSession,
    adapt_thresholds,
    decode_depth,
    encode_depth,
    initial_thresholds,
    reduce_visibility,
    select_lod,
    update_page_table,
)


# -- depth encoding -----------------------------------------------------------


def test_encoded_depth_decreases_with_distance():
    ds = [0.01, 0.5, 1.0, 7.3, 1e4]
    enc = [encode_depth(d) for d in ds]
    assert all(a > b for a, b in zip(enc, enc[1:]))
    for d, e in zip(ds, enc):
        assert decode_depth(e) == pytest.approx(d, rel=1e-6)
    assert encode_depth(np.inf) > 0  # still a valid required marker


# -- visibility reduction -----------------------------------------------------


def _links(n, table=None):
    out = [np.zeros(0, dtype=np.uint32) for _ in range(n + 1)]
    for src, targets in (table or {}).items():
        out[src] = np.asarray(targets, dtype=np.uint32)
    return out


def test_reduce_keeps_nearest_depth_per_page():
    page = np.array([[1, 1, 2], [0, 2, 2]], dtype=np.uint32)
    depth = np.array([[4.0, 2.0, 9.0], [np.inf, 3.0, 5.0]])
    req = reduce_visibility(page, depth, _links(2))
    assert set(req.required_ids()) == {1, 2}
    assert decode_depth(int(req.depths[1])) == pytest.approx(2.0)
    assert decode_depth(int(req.depths[2])) == pytest.approx(3.0)
    assert req.direct[1] and req.direct[2]


def test_reduce_propagates_links_one_hop():
    # 1 -> 2 -> 3: painting page 1 must pull 2 but NOT 3
    page = np.array([[1]], dtype=np.uint32)
    depth = np.array([[4.0]])
    req = reduce_visibility(page, depth, _links(3, {1: [2], 2: [3]}))
    ids = set(req.required_ids())
    assert ids == {1, 2}
    assert not req.direct[2]
    # the pulled page inherits the source's depth
    assert req.depths[2] == req.depths[1]


def test_reduce_link_does_not_overwrite_nearer_direct():
    page = np.array([[1, 2]], dtype=np.uint32)
    depth = np.array([[9.0, 2.0]])  # page 2 is seen nearer directly
    req = reduce_visibility(page, depth, _links(2, {1: [2]}))
    assert decode_depth(int(req.depths[2])) == pytest.approx(2.0)


def test_reduce_rejects_out_of_range_ids():
    page = np.array([[5]], dtype=np.uint32)
    depth = np.array([[1.0]])
    with pytest.raises(InvariantViolation):
        reduce_visibility(page, depth, _links(2))


def test_reduce_empty_frame():
    page = np.zeros((4, 4), dtype=np.uint32)
    depth = np.full((4, 4), np.inf)
    req = reduce_visibility(page, depth, _links(3))
    assert len(req.required_ids()) == 0


# -- LOD selection and adaptation ---------------------------------------------


def test_initial_thresholds_geometric():
    thr = initial_thresholds(16.0, 4)
    assert np.allclose(thr, [4.0, 8.0, 16.0])
    assert LodController(thr).level_count == 4


def test_select_lod_counts_thresholds_below():
    ctl = LodController(np.array([4.0, 8.0, 16.0]))
    assert select_lod(encode_depth(1.0), ctl) == 0
    assert select_lod(encode_depth(5.0), ctl) == 1
    assert select_lod(encode_depth(9.0), ctl) == 2
    assert select_lod(encode_depth(100.0), ctl) == 3
    assert select_lod(encode_depth(4.0), ctl) == 0  # boundary is not below


def test_adapt_direction_and_band():
    ctl = LodController(np.array([4.0, 8.0]), step=0.1)
    base = ctl.thresholds.copy()
    adapt_thresholds(ctl, usage_ratio=0.65, frame=0)  # in band: no move
    assert np.array_equal(ctl.thresholds, base)
    adapt_thresholds(ctl, usage_ratio=0.95, frame=1)  # above: shrink
    assert np.all(ctl.thresholds < base)
    shrunk = ctl.thresholds.copy()
    adapt_thresholds(ctl, usage_ratio=0.1, frame=2)  # below: grow
    assert np.all(ctl.thresholds > shrunk)


def test_adapt_step_compounds_and_decays():
    ctl = LodController(np.array([4.0]), step=0.1)
    adapt_thresholds(ctl, 0.1, frame=0)
    s0 = ctl.step
    adapt_thresholds(ctl, 0.1, frame=1)  # same direction inside window
    assert ctl.step == pytest.approx(s0 * 1.01)
    adapt_thresholds(ctl, 0.95, frame=2)  # flip
    assert ctl.step == pytest.approx(s0 * 1.01 * 0.99)


def test_adapt_step_clamped():
    ctl = LodController(np.array([4.0]), step=0.5, step_min=0.005, step_max=0.5)
    for f in range(200):
        adapt_thresholds(ctl, 0.1, frame=f)
    assert ctl.step <= 0.5
    ctl2 = LodController(np.array([4.0]), step=0.005)
    for f in range(200):
        adapt_thresholds(ctl2, 0.1 if f % 2 else 0.95, frame=f)
    assert ctl2.step >= 0.005


def test_thresholds_must_increase():
    with pytest.raises(InvariantViolation):
        LodController(np.array([4.0, 4.0]))


# -- page table ---------------------------------------------------------------


def _required(n, entries):
    """entries: {page_id: (depth, direct)}"""
    depths = np.zeros(n + 1, dtype=np.uint32)
    direct = np.zeros(n + 1, dtype=bool)
    for pid, (d, dr) in entries.items():
        depths[pid] = encode_depth(d)
        direct[pid] = dr
    return RequiredList(depths=depths, direct=direct)


def _controller(levels=1):
    if levels == 1:
        return LodController(np.zeros(0))
    return LodController(initial_thresholds(100.0, levels))


def test_update_places_required_pages():
    table = PageTable(4)
    req = _required(6, {1: (1.0, True), 5: (2.0, True)})
    plan, missing = update_page_table(table, req, _controller(), frame=0, staging_budget_pages=10)
    assert missing == 0
    assert {p.page_id for p in plan} == {1, 5}
    assert set(table.resident) == {1, 5}
    table.check()


def test_update_budget_breaks_not_skips():
    table = PageTable(8)
    req = _required(8, {p: (float(p), True) for p in range(1, 7)})
    plan, missing = update_page_table(table, req, _controller(), frame=0, staging_budget_pages=3)
    # nearest three fit; the fourth would exceed the budget and the walk stops
    assert [p.page_id for p in plan] == [1, 2, 3]
    assert missing == 3


def test_update_orders_direct_before_linked():
    table = PageTable(8)
    req = _required(8, {2: (5.0, False), 3: (1.0, True)})
    plan, _ = update_page_table(table, req, _controller(), frame=0, staging_budget_pages=10)
    assert [p.page_id for p in plan] == [3, 2]


def test_update_nearer_first_ties_to_lower_id():
    table = PageTable(8)
    req = _required(8, {4: (2.0, True), 2: (2.0, True), 7: (1.0, True)})
    plan, _ = update_page_table(table, req, _controller(), frame=0, staging_budget_pages=10)
    assert [p.page_id for p in plan] == [7, 2, 4]


def test_lru_evicts_oldest_unprotected():
    table = PageTable(2)
    ctl = _controller()
    update_page_table(table, _required(9, {1: (1.0, True)}), ctl, 0, 10)
    update_page_table(table, _required(9, {2: (1.0, True)}), ctl, 1, 10)
    # frame 2 requires 2 and 3: page 1 (LRU, unprotected) must fall out
    update_page_table(table, _required(9, {2: (1.0, True), 3: (1.0, True)}), ctl, 2, 10)
    assert set(table.resident) == {2, 3}
    table.check()


def test_required_pages_protected_from_eviction():
    table = PageTable(2)
    ctl = _controller()
    update_page_table(table, _required(9, {1: (1.0, True), 2: (2.0, True)}), ctl, 0, 10)
    # all entries hold required pages; a third required page cannot evict them
    plan, missing = update_page_table(
        table, _required(9, {1: (1.0, True), 2: (2.0, True), 3: (0.5, True)}), ctl, 1, 10
    )
    assert set(table.resident) == {1, 2}
    assert missing == 1
    table.check()


def test_same_level_packing_shares_entries():
    table = PageTable(2)
    ctl = _controller(levels=4)  # thresholds at (25, 50, 100) for radius 100
    # depth 60 -> level 2 -> entry packs 4 quarter pages
    req = _required(9, {p: (60.0, True) for p in (1, 2, 3, 4)})
    plan, missing = update_page_table(table, req, ctl, 0, 10)
    assert missing == 0
    entries = {p.entry for p in plan}
    assert len(entries) == 1  # all four landed in one physical entry
    assert table.occupied_entries() == 1
    assert table.usage_ratio() == pytest.approx(0.5)


def test_level_transition_replans_copy():
    table = PageTable(4)
    ctl = _controller(levels=4)
    update_page_table(table, _required(9, {1: (60.0, True)}), ctl, 0, 10)
    assert table.resident_level(1) == 2
    plan, _ = update_page_table(table, _required(9, {1: (1.0, True)}), ctl, 1, 10)
    assert [(p.page_id, p.level) for p in plan] == [(1, 0)]
    assert table.resident_level(1) == 0
    assert table.resident_counts(4) == (1, 0, 0, 0)
    table.check()


def test_fractional_budget_allows_coarse_copies():
    table = PageTable(4)
    ctl = _controller(levels=4)
    # four level-2 pages cost 0.25 each: a 1.0 budget takes all four
    req = _required(9, {p: (60.0, True) for p in (1, 2, 3, 4)})
    plan, missing = update_page_table(table, req, ctl, 0, staging_budget_pages=1.0)
    assert len(plan) == 4
    assert missing == 0


def test_table_capacity_validated():
    with pytest.raises(InvariantViolation):
        PageTable(0)


# -- session ------------------------------------------------------------------


def test_session_stats_contract(small_bundle):
    from vmsplat.render import Camera

    session = VmSession(small_bundle.scene, buffer_pages=30, staging_pages=30, vis_scale=0.25)
    cam = Camera(
        position=(0.0, 0.0, -2.0),
        orientation=(1.0, 0.0, 0.0, 0.0),
        fov_y=np.pi / 2,
        width=64,
        height=64,
    )
    image, stats = session.render_frame(cam, 0)
    assert image.shape == (64, 64, 3)
    assert stats["missing_pages"] <= stats["required_pages"]
    assert stats["resident_pages"] == sum(stats["resident_per_level"])
    assert len(stats["resident_per_level"]) == small_bundle.scene.lod_levels
    assert len(stats["thresholds"]) == small_bundle.scene.lod_levels - 1
    for key in ("visibility", "reduce", "update", "copy", "sort", "render"):
        assert stats[f"time_{key}"] >= 0.0
    assert 0.0 <= stats["usage"] <= 1.0


def test_session_rejects_unpaged_scene(small_bundle):
    from vmsplat.pipeline import raw_scene
    from vmsplat.synthetic import wall_scene

    raw = raw_scene(wall_scene(seed=1, count=50, extent=1.0, z=2.0))
    with pytest.raises(InvariantViolation):
        VmSession(raw)


def test_session_full_buffer_renders_like_flat_scene(small_bundle):
    from vmsplat.render import Camera, render_records

    scene = small_bundle.scene
    session = VmSession(
        scene,
        buffer_pages=scene.page_count,
        staging_pages=scene.page_count,
        vis_scale=0.5,
        lod_enabled=False,
    )
    cam = Camera(
        position=(0.0, 0.0, -3.0),
        orientation=(1.0, 0.0, 0.0, 0.0),
        fov_y=np.pi / 2,
        width=96,
        height=96,
    )
    image = None
    for i in range(6):
        image, stats = session.render_frame(cam, i)
    level0 = np.asarray(scene.gaussians[: scene.page_count * scene.page_size])
    reference = render_records(level0, cam)
    assert np.array_equal(image, reference)
