"""Page assignment over the proxy mesh: subdivision, merging, padding, links.

Pipeline order: ``assign_pages`` puts every Gaussian on its nearest face and
splits overloaded faces; ``merge_pages`` greedily merges per-face groups into
pages of at most ``page_size``; ``link_pages`` samples each Gaussian's
ellipsoid to find overlap onto foreign pages; ``pad_pages`` fixes the final
record layout. All stages are deterministic for fixed inputs and seed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from vmsplat.errors import InvariantViolation
from vmsplat.gaussians import RECORD_SIZE, quat_to_matrix
from vmsplat.kernels import reference as _ref_kernels
from vmsplat.mesh import (
    FaceBvh,
    ProxyMesh,
    edge_face_map,
    face_centroids,
    nearest_of_subset,
)

MAX_SPLIT_DEPTH = 16


@dataclass
class Page:
    """One page: id (never 0), member Gaussian indices, directed in-links."""

    id: int
    gaussian_indices: np.ndarray
    links: set = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.gaussian_indices)


def _group_by_face(nearest: np.ndarray, face_count: int) -> list:
    order = np.argsort(nearest, kind="stable")
    keys = nearest[order]
    starts = np.searchsorted(keys, np.arange(face_count))
    ends = np.searchsorted(keys, np.arange(face_count), side="right")
    return [order[s:e].astype(np.int64) for s, e in zip(starts, ends)]


def assign_pages(records, mesh: ProxyMesh, page_size: int, max_depth: int = MAX_SPLIT_DEPTH):
    """Nearest-face assignment with midpoint subdivision of overloaded faces.

    Returns (subdivided mesh, per-face Gaussian index arrays). Faces map
    one-to-one onto groups here; real page IDs appear after merging. The
    split edge rotates through (parent edge + 1) mod 3 across generations so
    repeated splits do not degenerate into slivers; root faces start at edge
    0. Past ``max_depth`` splits the overflow spills to the sibling face,
    then to the nearest face with spare capacity.
    """
    if page_size < 1:
        raise InvariantViolation("page_size must be >= 1")
    if mesh.face_count == 0:
        raise InvariantViolation("cannot assign pages on an empty mesh")
    records = np.asarray(records, dtype=np.float32).reshape(-1, RECORD_SIZE)
    pos = records[:, 0:3].astype(np.float64)

    nearest, _ = FaceBvh.from_mesh(mesh).nearest(pos) if len(pos) else (np.zeros(0, np.int64), None)
    groups = _group_by_face(nearest, mesh.face_count)

    verts = [mesh.vertices[i].copy() for i in range(mesh.vertex_count)]
    faces = [tuple(int(v) for v in f) for f in mesh.faces]
    split_edge = [0] * len(faces)
    depth = [0] * len(faces)
    sibling = [-1] * len(faces)
    mid_cache: dict = {}
    capped: list = []

    queue = deque(f for f in range(len(faces)) if groups[f].size > page_size)
    while queue:
        f = queue.popleft()
        if groups[f].size <= page_size:
            continue
        if depth[f] >= max_depth:
            capped.append(f)
            continue
        e = split_edge[f]
        tri = faces[f]
        a, b, c = tri[e], tri[(e + 1) % 3], tri[(e + 2) % 3]
        key = (a, b) if a < b else (b, a)
        m = mid_cache.get(key)
        if m is None:
            m = len(verts)
            verts.append(0.5 * (verts[a] + verts[b]))
            mid_cache[key] = m
        other = len(faces)
        faces[f] = (a, m, c)
        faces.append((m, b, c))
        tv = np.array(
            [[verts[a], verts[m], verts[c]], [verts[m], verts[b], verts[c]]], dtype=np.float64
        )
        # tie goes to the lower face index, which is the in-place child
        which, _ = nearest_of_subset(pos[groups[f]], tv)
        g = groups[f]
        groups[f] = g[which == 0]
        groups.append(g[which == 1])
        nd, ne = depth[f] + 1, (e + 1) % 3
        depth[f] = nd
        split_edge[f] = ne
        depth.append(nd)
        split_edge.append(ne)
        sibling[f] = other
        sibling.append(f)
        if groups[f].size > page_size:
            queue.append(f)
        if groups[other].size > page_size:
            queue.append(other)

    if capped:
        _spill(capped, groups, sibling, verts, faces, pos, page_size)

    out = ProxyMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int32))
    groups = [np.sort(g) for g in groups]
    total = sum(g.size for g in groups)
    if total != len(records):
        raise InvariantViolation(f"assignment lost records: {total} != {len(records)}")
    return out, groups


def _spill(capped, groups, sibling, verts, faces, pos, page_size):
    """Depth-capped overflow: keep the first page_size members, push the rest
    to the sibling, then to whichever face with spare room is closest."""
    varr = np.array(verts, dtype=np.float64)
    farr = np.array(faces, dtype=np.int64)
    tri_verts = varr[farr]
    for f in sorted(capped):
        if groups[f].size <= page_size:
            continue
        rest = groups[f][page_size:]
        groups[f] = groups[f][:page_size]
        for gi in rest:
            gi = int(gi)
            sib = sibling[f]
            if sib >= 0 and groups[sib].size < page_size:
                groups[sib] = np.append(groups[sib], gi)
                continue
            d2 = np.array(
                [
                    _ref_kernels.point_triangle_dist2(pos[gi], *tri_verts[j])
                    if groups[j].size < page_size
                    else np.inf
                    for j in range(len(groups))
                ]
            )
            tgt = int(np.argmin(d2))
            if not np.isfinite(d2[tgt]):
                raise InvariantViolation("no spare page capacity while spilling overflow")
            groups[tgt] = np.append(groups[tgt], gi)


def merge_pages(mesh: ProxyMesh, face_groups: list, page_size: int):
    """Greedy breadth-first merge of per-face groups into pages <= page_size.

    Starts from the lowest-index unmerged face, absorbs edge-adjacent faces
    breadth-first while the total fits; the first candidate that would
    overflow closes the page and seeds the next one. A page still under
    capacity with no adjacent candidates pulls the nearest unmerged face by
    centroid distance. Empty pages are dropped; their faces keep page 0.
    Returns (mesh with face_page written, pages with compact ids 1..N).
    """
    nf = mesh.face_count
    if len(face_groups) != nf:
        raise InvariantViolation("one group per face required")
    nbrs: list = [set() for _ in range(nf)]
    for flist in edge_face_map(mesh.faces).values():
        for i in flist:
            for j in flist:
                if i != j:
                    nbrs[i].add(j)
    nbrs = [sorted(s) for s in nbrs]
    centroids = face_centroids(mesh) if nf else np.zeros((0, 3))

    merged = np.zeros(nf, dtype=bool)
    page_face_lists: list = []
    pending = None
    while True:
        if pending is not None and not merged[pending]:
            base = pending
        else:
            free = np.flatnonzero(~merged)
            if free.size == 0:
                break
            base = int(free[0])
        pending = None

        cur = [base]
        size = face_groups[base].size
        merged[base] = True
        queue = deque(n for n in nbrs[base] if not merged[n])
        queued = set(queue)
        while True:
            if not queue:
                if size >= page_size:
                    break
                cand = _nearest_unmerged(cur, merged, centroids)
                if cand is None:
                    break
            else:
                cand = queue.popleft()
                queued.discard(cand)
                if merged[cand]:
                    continue
            if size + face_groups[cand].size <= page_size:
                merged[cand] = True
                cur.append(cand)
                size += face_groups[cand].size
                for n in nbrs[cand]:
                    if not merged[n] and n not in queued:
                        queue.append(n)
                        queued.add(n)
            else:
                pending = cand
                break
        page_face_lists.append(cur)

    face_page = np.zeros(nf, dtype=np.uint32)
    pages: list = []
    for flist in page_face_lists:
        idx = np.sort(np.concatenate([face_groups[f] for f in flist])) if flist else np.zeros(0, np.int64)
        if idx.size == 0:
            continue  # faces keep page 0
        pid = len(pages) + 1
        for f in flist:
            face_page[f] = pid
        pages.append(Page(id=pid, gaussian_indices=idx.astype(np.int64)))

    total = sum(len(p) for p in pages)
    expect = sum(g.size for g in face_groups)
    if total != expect:
        raise InvariantViolation(f"merge lost records: {total} != {expect}")
    for p in pages:
        if len(p) > page_size:
            raise InvariantViolation(f"page {p.id} exceeds page_size after merge")
    mesh.face_page = face_page
    return mesh, pages


def _nearest_unmerged(cur, merged, centroids):
    free = np.flatnonzero(~merged)
    if free.size == 0:
        return None
    d = np.linalg.norm(centroids[free][:, None, :] - centroids[cur][None, :, :], axis=2)
    best = d.min(axis=1)
    return int(free[np.argmin(best)])  # argmin takes the first = lowest index on ties


def pad_pages(pages: list, page_size: int) -> np.ndarray:
    """(page_count, page_size) Gaussian indices, -1 where padding goes."""
    out = np.full((len(pages), page_size), -1, dtype=np.int64)
    for i, p in enumerate(pages):
        k = len(p.gaussian_indices)
        if k > page_size:
            raise InvariantViolation(f"page {p.id} larger than page_size")
        out[i, :k] = p.gaussian_indices
    return out


def gather_records(records: np.ndarray, padded_indices: np.ndarray) -> np.ndarray:
    """Expand a padded index layout to records; -1 rows become all zeros."""
    flat = padded_indices.ravel()
    out = np.zeros((flat.size, RECORD_SIZE), dtype=np.float32)
    live = flat >= 0
    out[live] = records[flat[live]]
    return out


def sample_unit_sphere(count: int, rng) -> np.ndarray:
    """Spherical-coordinate sampling: r, theta/2pi, phi/pi all uniform.

    Deliberately non-uniform in volume (density rises toward the center and
    the poles); the linking stage depends on this exact construction, so do
    not "fix" it to a uniform ball.
    """
    u = rng.random((count, 3))
    r = u[:, 0]
    theta = 2.0 * np.pi * u[:, 1]
    phi = np.pi * u[:, 2]
    sp = np.sin(phi)
    return np.column_stack((r * sp * np.cos(theta), r * sp * np.sin(theta), r * np.cos(phi)))


def gaussian_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream per Gaussian index."""
    return np.random.Generator(np.random.Philox(key=[seed, 0], counter=[index, 0, 0, 0]))


def sample_gaussian_points(record: np.ndarray, count: int, seed: int, index: int) -> np.ndarray:
    """Sample points of one Gaussian's ellipsoid (1-sigma support) in world space."""
    p = sample_unit_sphere(count, gaussian_rng(seed, index))
    rot = quat_to_matrix(record[3:7].astype(np.float64))
    scaled = p * record[7:10].astype(np.float64)
    return record[0:3].astype(np.float64) + scaled @ rot.T


def link_pages(
    records: np.ndarray,
    mesh: ProxyMesh,
    pages: list,
    samples_per_gaussian: int = 32,
    seed: int = 7,
    link_threshold: int = 1,
):
    """Sample each Gaussian's ellipsoid; record overlap onto foreign pages.

    Two passes over the same sample set: first, faces still at page 0 adopt
    the page casting the most samples onto them (ties to the lower page id);
    second, every sample landing on a page different from its Gaussian's own
    records a directed link (sample page -> gaussian page), kept when the
    per-pair sample count reaches ``link_threshold``. Mutates ``pages`` links
    and ``mesh.face_page``; returns (mesh, pages).
    """
    n = len(records)
    owner = np.zeros(n, dtype=np.int64)
    for p in pages:
        owner[p.gaussian_indices] = p.id
    if n and owner.min() == 0:
        raise InvariantViolation("every Gaussian must already belong to a page")

    if n == 0 or samples_per_gaussian == 0:
        return mesh, pages

    s = samples_per_gaussian
    points = np.empty((n * s, 3), dtype=np.float64)
    for i in range(n):
        points[i * s : (i + 1) * s] = sample_gaussian_points(records[i], s, seed, i)
    sample_face, _ = FaceBvh.from_mesh(mesh).nearest(points)
    sample_owner = np.repeat(owner, s)

    # pass 1: majority vote for unassigned faces
    face_page = mesh.face_page.astype(np.int64)
    on_zero = face_page[sample_face] == 0
    if on_zero.any():
        pid_span = int(owner.max()) + 1
        key = sample_face[on_zero] * pid_span + sample_owner[on_zero]
        uniq, counts = np.unique(key, return_counts=True)
        vfaces = uniq // pid_span
        vpages = uniq % pid_span
        # per face: highest count wins, ties to the lower page id
        order = np.lexsort((vpages, -counts, vfaces))
        first = np.ones(len(order), dtype=bool)
        first[1:] = vfaces[order][1:] != vfaces[order][:-1]
        for j in order[first]:
            face_page[vfaces[j]] = vpages[j]
    mesh.face_page = face_page.astype(np.uint32)

    # pass 2: directed links against the finished face->page map
    sample_page = face_page[sample_face]
    cross = (sample_page != 0) & (sample_page != sample_owner)
    if cross.any():
        span = int(owner.max()) + 1
        key = sample_page[cross] * span + sample_owner[cross]
        uniq, counts = np.unique(key, return_counts=True)
        by_id = {p.id: p for p in pages}
        for k, c in zip(uniq, counts):
            if c >= link_threshold:
                by_id[int(k // span)].links.add(int(k % span))
    return mesh, pages
