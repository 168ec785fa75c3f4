"""Quadric-error-metric mesh simplification by iterative edge collapse.

The inner loop runs tens of thousands of times on meshes straight out of
isosurface extraction, so quadrics are kept as flat scalar 10-tuples
(symmetric 4x4 upper triangle) and the per-edge solve is closed-form;
array-object overhead would dominate otherwise.
"""

from __future__ import annotations

import heapq

import numpy as np

from vmsplat.errors import DataError
from vmsplat.mesh.geometry import ProxyMesh

_DET_EPS = 1e-10
_AREA_EPS = 1e-12


def _vertex_quadrics(verts: np.ndarray, faces: np.ndarray) -> list:
    """Sum of face-plane quadrics per vertex, as 10-tuples
    (q00,q01,q02,q03,q11,q12,q13,q22,q23,q33)."""
    tri = verts[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(n, axis=1)
    ok = norm > _AREA_EPS
    unit = np.zeros_like(n)
    unit[ok] = n[ok] / norm[ok, None]
    d = -np.einsum("ij,ij->i", unit, tri[:, 0])
    p = np.concatenate([unit, d[:, None]], axis=1)  # zero rows for degenerate faces
    outer = p[:, :, None] * p[:, None, :]
    q = np.zeros((len(verts), 4, 4))
    for col in range(3):
        np.add.at(q, faces[:, col], outer)
    iu = ([0, 0, 0, 0, 1, 1, 1, 2, 2, 3], [0, 1, 2, 3, 1, 2, 3, 2, 3, 3])
    return [tuple(row) for row in q[:, iu[0], iu[1]].tolist()]


def _quadric_cost(q, x, y, z):
    q00, q01, q02, q03, q11, q12, q13, q22, q23, q33 = q
    return (
        q00 * x * x
        + q11 * y * y
        + q22 * z * z
        + 2.0 * (q01 * x * y + q02 * x * z + q12 * y * z + q03 * x + q13 * y + q23 * z)
        + q33
    )


def _optimal_point(q, a, b):
    """Collapse target minimizing the summed quadric, with fallbacks."""
    q00, q01, q02, q03, q11, q12, q13, q22, q23, q33 = q
    det = (
        q00 * (q11 * q22 - q12 * q12)
        - q01 * (q01 * q22 - q12 * q02)
        + q02 * (q01 * q12 - q11 * q02)
    )
    if abs(det) > _DET_EPS:
        inv = 1.0 / det
        # Cramer's rule on A v = -b with A the 3x3 block, b = (q03, q13, q23)
        bx, by, bz = -q03, -q13, -q23
        x = (
            bx * (q11 * q22 - q12 * q12)
            - q01 * (by * q22 - q12 * bz)
            + q02 * (by * q12 - q11 * bz)
        ) * inv
        y = (
            q00 * (by * q22 - bz * q12)
            - bx * (q01 * q22 - q12 * q02)
            + q02 * (q01 * bz - by * q02)
        ) * inv
        z = (
            q00 * (q11 * bz - by * q12)
            - q01 * (q01 * bz - by * q02)
            + bx * (q01 * q12 - q11 * q02)
        ) * inv
        return (x, y, z), max(0.0, _quadric_cost(q, x, y, z))
    best_v, best_c = None, None
    mid = ((a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5, (a[2] + b[2]) * 0.5)
    for cand in (mid, tuple(a), tuple(b)):
        c = _quadric_cost(q, cand[0], cand[1], cand[2])
        if best_c is None or c < best_c:
            best_v, best_c = cand, c
    return best_v, max(0.0, best_c)


def _add_q(a, b):
    return (
        a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4],
        a[5] + b[5], a[6] + b[6], a[7] + b[7], a[8] + b[8], a[9] + b[9],
    )


def simplify(mesh: ProxyMesh, target_faces: int) -> ProxyMesh:
    """Collapse lowest-error edges until the face count reaches the target.

    Collapses that would break manifoldness (link condition), flip a face
    normal, or create a near-zero-area face are skipped. A target at or
    above the input face count returns the mesh unchanged.
    """
    if target_faces < 4:
        raise DataError("target_faces must be >= 4")
    if mesh.face_count <= target_faces:
        return ProxyMesh(mesh.vertices.copy(), mesh.faces.copy(), mesh.face_page.copy())

    verts_np = mesh.vertices.astype(np.float64)
    verts = [tuple(v) for v in verts_np.tolist()]
    faces = [list(map(int, f)) for f in mesh.faces]
    alive = [True] * len(faces)
    nv = len(verts)

    vfaces = [set() for _ in range(nv)]
    for fi, (a, b, c) in enumerate(faces):
        vfaces[a].add(fi)
        vfaces[b].add(fi)
        vfaces[c].add(fi)
    quadrics = _vertex_quadrics(verts_np, np.asarray(mesh.faces, dtype=np.int64))

    version = [0] * nv
    items: list = []
    seq = 0

    def push_edge(u, v):
        nonlocal seq
        if u > v:
            u, v = v, u
        pos, cost = _optimal_point(_add_q(quadrics[u], quadrics[v]), verts[u], verts[v])
        heapq.heappush(items, (cost, u, v, seq, pos, version[u], version[v]))
        seq += 1

    pushed = set()
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            if key not in pushed:
                pushed.add(key)
                push_edge(u, v)
    del pushed

    def neighbors(u):
        out = set()
        for fi in vfaces[u]:
            out.update(faces[fi])
        out.discard(u)
        return out

    def collapse_ok(u, v, pos):
        shared = vfaces[u] & vfaces[v]
        opposite = set()
        for fi in shared:
            opposite.update(w for w in faces[fi] if w not in (u, v))
        if neighbors(u) & neighbors(v) != opposite:
            return False  # link condition: collapse would pinch the surface
        px, py, pz = pos
        for fi in (vfaces[u] | vfaces[v]) - shared:
            tri = faces[fi]
            (ax, ay, az), (bx, by, bz), (cx, cy, cz) = (verts[w] for w in tri)
            ox = (by - ay) * (cz - az) - (bz - az) * (cy - ay)
            oy = (bz - az) * (cx - ax) - (bx - ax) * (cz - az)
            oz = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            (ax, ay, az), (bx, by, bz), (cx, cy, cz) = (
                pos if w in (u, v) else verts[w] for w in tri
            )
            nx = (by - ay) * (cz - az) - (bz - az) * (cy - ay)
            ny = (bz - az) * (cx - ax) - (bx - ax) * (cz - az)
            nz = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if nx * nx + ny * ny + nz * nz < _AREA_EPS * _AREA_EPS:
                return False
            if ox * nx + oy * ny + oz * nz <= 0.0:
                return False
        return True

    live_count = len(faces)
    while live_count > target_faces and items:
        cost, u, v, _seq, pos, ver_u, ver_v = heapq.heappop(items)
        if version[u] != ver_u or version[v] != ver_v:
            continue
        if not (vfaces[u] & vfaces[v]):  # edge no longer exists
            continue
        if not collapse_ok(u, v, pos):
            continue

        verts[u] = pos
        quadrics[u] = _add_q(quadrics[u], quadrics[v])
        for fi in list(vfaces[u] & vfaces[v]):
            alive[fi] = False
            live_count -= 1
            for w in faces[fi]:
                vfaces[w].discard(fi)
        for fi in list(vfaces[v]):
            faces[fi] = [u if w == v else w for w in faces[fi]]
            vfaces[u].add(fi)
        vfaces[v] = set()
        version[u] += 1
        version[v] += 1
        for w in sorted(neighbors(u)):
            push_edge(u, w)

    used = sorted({w for fi, f in enumerate(faces) if alive[fi] for w in f})
    remap = {old: new for new, old in enumerate(used)}
    out_faces = np.array(
        [[remap[w] for w in faces[fi]] for fi in range(len(faces)) if alive[fi]],
        dtype=np.int32,
    ).reshape(-1, 3)
    out_verts = np.array([verts[i] for i in used], dtype=np.float64).reshape(-1, 3)
    return ProxyMesh(out_verts, out_faces)
