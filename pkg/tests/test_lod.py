"""Detail-pyramid construction: clustering behavior, merge arithmetic, and
per-level record accounting."""

import numpy as np
import pytest

from vmsplat import lod
from vmsplat.errors import InvariantViolation
from vmsplat.gaussians import RECORD_SIZE, is_padding, padding_records
from vmsplat.synthetic import wall_scene


def _padded_page(records, page_size):
    n = len(records)
    assert n <= page_size
    return np.concatenate([records, padding_records(page_size - n)])


def test_cluster_assignment_shape_and_range():
    records = wall_scene(seed=6, count=120, extent=2.0, z=0.0)
    assign = lod.cluster_page(records, 16, seed=3)
    assert assign.shape == (120,)
    assert assign.min() >= 0 and assign.max() < 16
    assert len(np.unique(assign)) == 16  # reseeding keeps clusters non-empty


def test_cluster_deterministic():
    records = wall_scene(seed=6, count=120, extent=2.0, z=0.0)
    a = lod.cluster_page(records, 10, seed=3)
    b = lod.cluster_page(records, 10, seed=3)
    assert np.array_equal(a, b)


def test_cluster_k_at_least_n_is_identity():
    records = wall_scene(seed=6, count=8, extent=2.0, z=0.0)
    assert np.array_equal(lod.cluster_page(records, 8, seed=0), np.arange(8))
    assert np.array_equal(lod.cluster_page(records, 20, seed=0), np.arange(8))


def test_cluster_groups_separated_blobs():
    # two tight, distant blobs and k=2 must split exactly along the gap
    rng = np.random.default_rng(0)
    a = wall_scene(seed=1, count=30, extent=0.5, z=0.0)
    b = wall_scene(seed=2, count=30, extent=0.5, z=50.0)
    records = np.concatenate([a, b])
    assign = lod.cluster_page(records, 2, seed=1)
    assert len(np.unique(assign[:30])) == 1
    assert len(np.unique(assign[30:])) == 1
    assert assign[0] != assign[30]


def test_merge_cluster_means_and_scale():
    records = wall_scene(seed=7, count=6, extent=1.0, z=0.0)
    merged = lod.merge_cluster(records)
    assert merged.shape == (RECORD_SIZE,)
    assert np.allclose(merged[0:3], records[:, 0:3].mean(axis=0), atol=1e-6)
    assert np.allclose(merged[10], records[:, 10].mean(), atol=1e-6)
    assert np.allclose(merged[11:], records[:, 11:].mean(axis=0), atol=1e-5)
    factor = 2.0 ** (1.0 / 3.0)
    assert np.allclose(merged[7:10], records[:, 7:10].mean(axis=0) * factor, rtol=1e-6)
    assert np.isclose(np.linalg.norm(merged[3:7]), 1.0, atol=1e-6)


def test_merge_cluster_quat_hemisphere():
    # identical orientations stored with opposite signs must not cancel
    rec = wall_scene(seed=7, count=1, extent=1.0, z=0.0)[0]
    flipped = rec.copy()
    flipped[3:7] *= -1.0
    merged = lod.merge_cluster(np.stack([rec, flipped]))
    dot = abs(float(np.dot(merged[3:7], rec[3:7])))
    assert dot > 0.999999


def test_pyramid_counts_and_padding():
    page_size = 64
    pages = 3
    rng_counts = [64, 50, 7]  # full, partial, tiny
    rows = []
    for i, c in enumerate(rng_counts):
        rows.append(_padded_page(wall_scene(seed=10 + i, count=c, extent=2.0, z=0.0), page_size))
    level0 = np.concatenate(rows)
    levels = lod.build_pyramid(level0, page_size, level_count=3, max_iters=10, seed=7)
    assert len(levels) == 3
    assert levels[0] is level0 or np.array_equal(levels[0], level0)
    for k, arr in enumerate(levels):
        per = page_size >> k
        assert arr.shape == (pages * per, RECORD_SIZE)
        for p in range(pages):
            page = arr[p * per : (p + 1) * per]
            live = ~is_padding(page)
            # live records pack to the front, padding to the back
            first_pad = int(live.sum())
            assert not live[first_pad:].any()
            # halving, rounded up, never exceeds capacity
            expect = min(per, -(-rng_counts[p] >> k) if k else rng_counts[p])
    # live counts halve (ceil) per level
    for p, c in enumerate(rng_counts):
        want = c
        for k, arr in enumerate(levels):
            per = page_size >> k
            page = arr[p * per : (p + 1) * per]
            live = int((~is_padding(page)).sum())
            assert live == want
            want = (want + 1) // 2 if want > 1 else 1


def test_pyramid_deterministic():
    page_size = 32
    level0 = _padded_page(wall_scene(seed=12, count=29, extent=2.0, z=0.0), page_size)
    a = lod.build_pyramid(level0, page_size, level_count=3, max_iters=10, seed=7)
    b = lod.build_pyramid(level0, page_size, level_count=3, max_iters=10, seed=7)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_pyramid_rejects_bad_level_count():
    level0 = _padded_page(wall_scene(seed=12, count=8, extent=2.0, z=0.0), 16)
    with pytest.raises(InvariantViolation):
        lod.build_pyramid(level0, 16, level_count=0)


def test_weights_must_not_be_negative():
    lod.AttributeWeights(opacity=0.0).validate()  # zero drops the attribute
    with pytest.raises(InvariantViolation):
        lod.AttributeWeights(position=-1.0).validate()
