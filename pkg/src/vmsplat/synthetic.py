"""Synthetic scene generators with controlled geometry.

Real captured scenes run to gigabytes; these build desk-scale record arrays
with known structure (an occluder wall, disjoint clusters, filled boxes) so
streaming behavior has exact oracles: which pages can be visible, which
Gaussians straddle page boundaries, how many pages the scene needs.

Colors are a smooth function of position plus seeded noise, so image metrics
respond to missing geometry rather than to noise alone.
"""

from __future__ import annotations

import numpy as np

from vmsplat.gaussians import RECORD_SIZE
from vmsplat.render import SH_C0


def _records(rng, pos, scale, opacity_range=(0.55, 0.95)) -> np.ndarray:
    n = len(pos)
    out = np.zeros((n, RECORD_SIZE), dtype=np.float32)
    out[:, 0:3] = pos
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    out[:, 3:7] = q
    out[:, 7:10] = scale
    out[:, 10] = rng.uniform(*opacity_range, size=n)
    colors = 0.5 + 0.35 * np.sin(pos * np.array([0.7, 1.1, 0.4]) + np.array([0.0, 2.1, 4.2]))
    colors += rng.normal(scale=0.03, size=(n, 3))
    out[:, 11:14] = (np.clip(colors, 0.05, 0.95) - 0.5) / SH_C0
    out[:, 14:17] = rng.normal(scale=0.02, size=(n, 3))  # faint view dependence
    return out


def wall_records(
    rng, count: int, extent: float, z: float, thickness: float = 0.3, scale: float = 0.28
):
    # thickness and scale are sized so the slab is solid at occupancy-grid
    # resolution; a sub-voxel wall melts away under morphological opening
    pos = np.column_stack(
        [
            rng.uniform(-extent, extent, count),
            rng.uniform(-extent, extent, count),
            rng.normal(z, thickness, count),
        ]
    )
    s = np.exp(rng.normal(np.log(scale), 0.25, size=(count, 3))).astype(np.float32)
    s[:, 2] *= 0.6  # thinner in depth
    return _records(rng, pos, s)


def blob_records(rng, count: int, center, radius: float, scale: float = 0.14):
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * np.cbrt(rng.uniform(0, 1, count))
    pos = np.asarray(center, dtype=np.float64) + d * r[:, None]
    s = np.exp(rng.normal(np.log(scale), 0.2, size=(count, 3))).astype(np.float32)
    return _records(rng, pos, s)


def occluder_scene(
    seed: int = 1,
    wall_count: int = 12600,
    cluster_count: int = 3000,
    sink_count: int = 700,
    extent: float = 6.0,
    wall_z: float = 10.0,
):
    """Occluder wall with a front cluster and a hidden cluster behind it.

    The geometry is engineered so pages never mix front-visible and hidden
    content, which page merging would otherwise do when a page gets locally
    stuck and reaches for the nearest unmerged faces:

    - the front cluster owns the lowest x coordinates, so isosurface face
      order starts merging there;
    - the hidden chain (two sink blobs, then the hidden cluster) sits at a
      standoff from the wall LARGER than any distance within the visible
      region, so a stuck page always finds visible faces (if any remain)
      before the first sink: by the time merging crosses the standoff, no
      visible face is left to mix with;
    - each sink holds more records than one page can take, so the leftover
      page that crosses a gap fills up and closes inside the sink it lands
      in; the page that finally reaches the hidden cluster contains only
      sink records, and is itself occluded;
    - all gaps are several sampling radii wide, so page links never form
      across components; with one-hop link propagation no visible page can
      pull a page holding hidden records.

    Returns (records, layout dict with the z bands used to classify pages).
    """
    rng = np.random.default_rng(seed)
    front = blob_records(rng, cluster_count, (-9.0, 0.0, wall_z - 4.5), 1.5)
    wall = wall_records(rng, wall_count, extent, wall_z)
    sink1 = blob_records(rng, sink_count, (0.0, 0.0, wall_z + 23.0), 0.9)
    sink2 = blob_records(rng, sink_count, (0.0, 0.0, wall_z + 26.4), 0.9)
    back = blob_records(rng, cluster_count, (0.0, 0.0, wall_z + 30.6), 1.1)
    records = np.concatenate([front, wall, sink1, sink2, back], axis=0)
    layout = {
        "wall_z": wall_z,
        "extent": extent,
        "visible_max_z": wall_z + 1.5,  # wall backside ends here
        "hidden_min_z": wall_z + 28.5,  # hidden cluster starts here
        "front_center": (-9.0, 0.0, wall_z - 4.5),
    }
    return records, layout


def wall_scene(seed: int = 2, count: int = 12000, extent: float = 8.0, z: float = 10.0):
    """A single flat wall; every page is visible from any frontal viewpoint."""
    rng = np.random.default_rng(seed)
    return wall_records(rng, count, extent, z)


def box_scene(seed: int = 3, count: int = 30000, extent: float = 20.0, depth: float = 40.0):
    """Gaussians filling a box volume in front of the origin; used for
    zoom-out paths where the visible page set grows with distance."""
    rng = np.random.default_rng(seed)
    pos = np.column_stack(
        [
            rng.uniform(-extent, extent, count),
            rng.uniform(-extent, extent, count),
            rng.uniform(2.0, depth, count),
        ]
    )
    s = np.exp(rng.normal(np.log(0.18), 0.25, size=(count, 3))).astype(np.float32)
    return _records(rng, pos, s)
