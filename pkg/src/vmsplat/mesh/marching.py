"""Marching cubes over boolean occupancy grids.

The 256-entry case table is generated at import time instead of being copied
from a published listing: per cube face, marching-squares cut segments are
derived with a fixed rule for the ambiguous two-diagonal case (occupied
corners are never joined across the face). Segment choice depends only on
the face's corner pattern, so the two cubes sharing a face always agree,
which makes the output crack-free. Segments chain into closed loops (every
cut cube edge borders exactly two faces, hence two segments), loops are
fan-triangulated, and orientation is fixed so normals point out of the
occupied region. Cubes are walked one sample beyond the grid with a virtual
empty border, so any finite occupancy yields a closed surface. Vertices sit
at cut-edge midpoints (boolean samples carry no gradient to interpolate).
"""

from __future__ import annotations

import numpy as np

from vmsplat.mesh.geometry import ProxyMesh
from vmsplat.mesh.occupancy import OccupancyGrid

CORNER_OFFSETS = np.array(
    [(i & 1, (i >> 1) & 1, (i >> 2) & 1) for i in range(8)], dtype=np.int64
)

# 12 cube edges as (low corner, high corner); 0-3 along x, 4-7 y, 8-11 z
EDGES = (
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
)
EDGE_AXIS = (0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2)

# each face: 4 corners in cyclic order, edge i joins corner i and i+1
_FACES = (
    ((0, 2, 6, 4), (4, 10, 6, 8)),
    ((1, 3, 7, 5), (5, 11, 7, 9)),
    ((0, 1, 5, 4), (0, 9, 2, 8)),
    ((2, 3, 7, 6), (1, 11, 3, 10)),
    ((0, 1, 3, 2), (0, 5, 1, 4)),
    ((4, 5, 7, 6), (2, 7, 3, 6)),
)

_EDGE_MIDPOINTS = np.array(
    [(CORNER_OFFSETS[a] + CORNER_OFFSETS[b]) / 2.0 for a, b in EDGES]
)


def _face_segments(config: int, corners, edges):
    """Cut segments (pairs of cube-edge ids) of one face for one cube config."""
    inside = [i for i in range(4) if config >> corners[i] & 1]
    if len(inside) in (0, 4):
        return []
    if len(inside) == 1:
        j = inside[0]
        return [(edges[(j - 1) % 4], edges[j])]
    if len(inside) == 3:
        j = next(i for i in range(4) if i not in inside)
        return [(edges[(j - 1) % 4], edges[j])]
    a, b = inside
    if (b - a) % 4 in (1, 3):  # adjacent pair
        j = a if (b - a) % 4 == 1 else b
        return [(edges[(j - 1) % 4], edges[(j + 1) % 4])]
    # diagonal pair: cut each occupied corner off individually so occupied
    # regions are never joined across the face (the fixed ambiguity rule)
    return [
        (edges[(a - 1) % 4], edges[a]),
        (edges[(b - 1) % 4], edges[b]),
    ]


def _chain_loops(segments):
    """Closed loops (lists of cube-edge ids) from an edge-pairing multiset."""
    adj: dict = {}
    for u, v in segments:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    for v, nb in adj.items():
        if len(nb) != 2:
            raise AssertionError(f"cut edge {v} has degree {len(nb)}")
    loops = []
    seen = set()
    for start in sorted(adj):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            a, b = adj[cur]
            nxt = b if a == prev else a
            if nxt == start:
                break
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        loops.append(loop)
    return loops


def _orient_loop(loop, config):
    """Reverse the loop if its Newell normal points into the occupied side."""
    pts = _EDGE_MIDPOINTS[loop]
    normal = np.zeros(3)
    for i in range(len(loop)):
        normal += np.cross(pts[i], pts[(i + 1) % len(loop)])
    grad = np.zeros(3)
    for e in loop:
        a, b = EDGES[e]
        ina = config >> a & 1
        out_c, in_c = (b, a) if ina else (a, b)
        grad += CORNER_OFFSETS[out_c] - CORNER_OFFSETS[in_c]
    d = float(normal @ grad)
    if abs(d) < 1e-9:
        raise AssertionError(f"ambiguous loop orientation for config {config:#x}")
    return loop if d > 0 else loop[::-1]


def _build_table():
    table = []
    for config in range(256):
        segments = []
        for corners, edges in _FACES:
            segments.extend(_face_segments(config, corners, edges))
        tris = []
        for loop in _chain_loops(segments):
            loop = _orient_loop(loop, config)
            for i in range(1, len(loop) - 1):
                tris.append((loop[0], loop[i], loop[i + 1]))
        table.append(tris)
    return table

CASE_TABLE = _build_table()


def case_triangle_count(config: int) -> int:
    return len(CASE_TABLE[config])


def marching_cubes(grid: OccupancyGrid) -> ProxyMesh:
    """Extract the occupancy boundary as a closed triangle mesh."""
    occ = grid.values
    padded = np.pad(occ, 1, constant_values=False).astype(np.uint16)
    cx, cy, cz = occ.shape[0] + 1, occ.shape[1] + 1, occ.shape[2] + 1
    config = np.zeros((cx, cy, cz), dtype=np.uint16)
    for bit, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        config |= padded[dx : dx + cx, dy : dy + cy, dz : dz + cz] << np.uint16(bit)

    active = np.argwhere((config != 0) & (config != 255))
    vert_ids: dict = {}
    vertices: list = []
    faces: list = []
    origin = grid.origin
    voxel = grid.voxel_size
    for ci, cj, ck in active:
        base = np.array((ci - 1, cj - 1, ck - 1), dtype=np.int64)  # sample coords
        for tri in CASE_TABLE[int(config[ci, cj, ck])]:
            ids = []
            for e in tri:
                lo = base + CORNER_OFFSETS[EDGES[e][0]]
                axis = EDGE_AXIS[e]
                key = (int(lo[0]), int(lo[1]), int(lo[2]), axis)
                vid = vert_ids.get(key)
                if vid is None:
                    vid = len(vertices)
                    vert_ids[key] = vid
                    p = origin + (lo + 0.5) * voxel
                    p[axis] += 0.5 * voxel
                    vertices.append(p)
                ids.append(vid)
            faces.append(ids)

    if not faces:
        return ProxyMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))
    return ProxyMesh(np.asarray(vertices), np.asarray(faces, dtype=np.int32))
