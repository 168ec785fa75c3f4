"""Per-page level-of-detail generation: k-means clustering + attribute merge.

Each level halves the record count of every page: level k holds
page_size / 2^k records per page, padding included. Level 0 is the original
data and is never modified. Pages are independent, so pyramid construction
parallelizes over pages; determinism holds because every page draws from its
own counter-based stream keyed by (seed, page id).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vmsplat.errors import InvariantViolation
from vmsplat.gaussians import RECORD_SIZE, is_padding
from vmsplat.utils import map_ordered

DEFAULT_LEVELS = 4
DEFAULT_SCALE_FACTOR = 2.0 ** (1.0 / 3.0)  # volume doubles for a 2-to-1 merge
DEFAULT_KMEANS_ITERS = 50


@dataclass(frozen=True)
class AttributeWeights:
    """Distance weights for clustering; position dominates by design."""

    position: float = 1.0
    rotation: float = 0.1
    scale: float = 0.1
    opacity: float = 0.05
    sh_dc: float = 0.1

    def validate(self) -> None:
        for name in ("position", "rotation", "scale", "opacity", "sh_dc"):
            if getattr(self, name) < 0:
                raise InvariantViolation(f"negative weight {name}")


def _page_rng(seed: int, page_id: int) -> np.random.Generator:
    # domain 1 keeps LOD streams disjoint from link-sampling streams
    return np.random.Generator(np.random.Philox(key=[seed, 1], counter=[page_id, 0, 0, 0]))


def _features(records: np.ndarray, weights: AttributeWeights) -> np.ndarray:
    """Weighted attribute vectors: position, hemisphere-aligned rotation,
    scale, opacity, SH DC term. Higher SH bands are excluded on purpose."""
    r = records.astype(np.float64)
    quat = r[:, 3:7].copy()
    flip = quat[:, 0] < 0
    quat[flip] *= -1.0
    return np.hstack(
        [
            r[:, 0:3] * weights.position,
            quat * weights.rotation,
            r[:, 7:10] * weights.scale,
            r[:, 10:11] * weights.opacity,
            r[:, 11:14] * weights.sh_dc,
        ]
    )


def _kmeans_pp_init(feat: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = feat.shape[0]
    centers = np.empty((k, feat.shape[1]), dtype=np.float64)
    first = int(rng.integers(m))
    centers[0] = feat[first]
    d2 = ((feat - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a center; any choice is equal
            idx = int(rng.integers(m))
        else:
            idx = int(rng.choice(m, p=d2 / total))
        centers[c] = feat[idx]
        d2 = np.minimum(d2, ((feat - centers[c]) ** 2).sum(axis=1))
    return centers


def cluster_page(
    page_records: np.ndarray,
    k: int,
    weights: AttributeWeights = AttributeWeights(),
    max_iters: int = DEFAULT_KMEANS_ITERS,
    rng: np.random.Generator | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Lloyd k-means over weighted attributes; returns a cluster index per record.

    Empty clusters are reseeded at the point farthest from its assigned
    center. Inertia is recomputed every iteration and asserted non-increasing;
    iteration stops at the assignment fixpoint or ``max_iters``.
    """
    weights.validate()
    m = len(page_records)
    if k >= m:
        return np.arange(m, dtype=np.int64)
    if k < 1:
        raise InvariantViolation("cluster count must be >= 1")
    if rng is None:
        rng = _page_rng(seed, 0)

    feat = _features(np.asarray(page_records, dtype=np.float32), weights)
    centers = _kmeans_pp_init(feat, k, rng)
    assign = np.full(m, -1, dtype=np.int64)
    prev_inertia = np.inf
    for _ in range(max_iters):
        d2 = ((feat[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        point_d2 = d2[np.arange(m), new_assign]
        inertia = float(point_d2.sum())
        if inertia > prev_inertia + 1e-9 * max(1.0, prev_inertia):
            raise InvariantViolation("k-means inertia increased")
        prev_inertia = inertia
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(point_d2.argmax())
            centers[c] = feat[far]
            assign[far] = c
            point_d2[far] = 0.0
            counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c]:
                centers[c] = feat[assign == c].mean(axis=0)
    return assign


def merge_cluster(members: np.ndarray, scale_factor: float = DEFAULT_SCALE_FACTOR) -> np.ndarray:
    """Merge member records into one: means everywhere, except rotation uses
    the normalized mean of hemisphere-aligned quaternions and scale gets the
    volume-compensation factor."""
    members = np.asarray(members, dtype=np.float32).reshape(-1, RECORD_SIZE)
    if len(members) == 0:
        raise InvariantViolation("cannot merge an empty cluster")
    r = members.astype(np.float64)
    out = np.empty(RECORD_SIZE, dtype=np.float64)
    out[0:3] = r[:, 0:3].mean(axis=0)
    quat = r[:, 3:7].copy()
    ref = quat[0]
    dots = quat @ ref
    quat[dots < 0] *= -1.0
    q = quat.mean(axis=0)
    norm = np.linalg.norm(q)
    out[3:7] = ref if norm < 1e-6 else q / norm
    out[7:10] = r[:, 7:10].mean(axis=0) * scale_factor
    out[10] = r[:, 10].mean()
    out[11:] = r[:, 11:].mean(axis=0)
    return out.astype(np.float32)


def _page_pyramid(args):
    records, page_id, level_count, page_size, scale_factor, max_iters, seed, weights = args
    rng = _page_rng(seed, page_id)
    levels = []
    current = records
    for k in range(1, level_count):
        cap = page_size >> k
        live = current[~is_padding(current)]
        merged = np.zeros((cap, RECORD_SIZE), dtype=np.float32)
        if len(live):
            want = math.ceil(len(live) / 2)
            assign = cluster_page(live, want, weights, max_iters, rng=rng)
            n_out = 0
            for c in range(int(assign.max()) + 1):
                sel = live[assign == c]
                if len(sel) == 0:
                    continue
                merged[n_out] = merge_cluster(sel, scale_factor)
                n_out += 1
            if n_out > cap:
                raise InvariantViolation(f"page {page_id}: level {k} overflow ({n_out} > {cap})")
        levels.append(merged)
        current = merged
    return levels


def build_pyramid(
    level0: np.ndarray,
    page_size: int,
    level_count: int = DEFAULT_LEVELS,
    scale_factor: float = DEFAULT_SCALE_FACTOR,
    max_iters: int = DEFAULT_KMEANS_ITERS,
    seed: int = 7,
    weights: AttributeWeights = AttributeWeights(),
) -> list:
    """Build per-level record arrays from padded level-0 pages.

    ``level0`` is (page_count * page_size, 59). Returns a list of
    ``level_count`` arrays; element k holds page_count pages of
    page_size / 2^k records each. Element 0 is the input, untouched.
    """
    if level_count < 1:
        raise InvariantViolation("level_count must be >= 1")
    if page_size % (1 << (level_count - 1)) != 0:
        raise InvariantViolation(
            f"page_size {page_size} not divisible by 2^{level_count - 1}"
        )
    level0 = np.asarray(level0, dtype=np.float32).reshape(-1, RECORD_SIZE)
    if page_size and len(level0) % page_size != 0:
        raise InvariantViolation("level-0 size is not a whole number of pages")
    page_count = len(level0) // page_size if page_size else 0
    out = [level0]
    if level_count == 1 or page_count == 0:
        return out + [
            np.zeros((0, RECORD_SIZE), dtype=np.float32) for _ in range(level_count - 1)
        ]

    jobs = [
        (
            level0[p * page_size : (p + 1) * page_size],
            p + 1,
            level_count,
            page_size,
            scale_factor,
            max_iters,
            seed,
            weights,
        )
        for p in range(page_count)
    ]
    per_page = map_ordered(_page_pyramid, jobs)
    for k in range(1, level_count):
        out.append(np.concatenate([pp[k - 1] for pp in per_page], axis=0))
    return out
