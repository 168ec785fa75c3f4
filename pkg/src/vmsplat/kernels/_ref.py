"""Pure NumPy reference implementations of the hot kernels.

These define the kernel contracts; the Cython module ``_core`` mirrors them.
They are correct but slow on large inputs, so the compiled core is preferred
at import time when available.
"""

from __future__ import annotations

import numpy as np

STOP_TRANSMITTANCE = 1.0 / 255.0
MAX_SPLAT_WEIGHT = 0.99


def composite_splats(centers, conics, colors, alphas, bounds, image):
    """Front-to-back alpha compositing of sorted splats into ``image``.

    Splats are processed in array order (callers sort front-to-back).
    Per splat i: for every pixel (x, y) in the half-open bound box
    ``bounds[i] = (x0, x1, y0, y1)``, with d = pixel center - center,
    weight w = alpha * exp(-0.5 * d' conic d) clamped to [0, 0.99] is
    blended with running transmittance T: rgb += w * T * color,
    T *= 1 - w. A pixel is finalized once T < 1/255.

    ``image`` is float32 (h, w, 3), modified in place. Returns None.
    """
    h, w = image.shape[0], image.shape[1]
    trans = np.ones((h, w), dtype=np.float32)
    for i in range(centers.shape[0]):
        x0, x1, y0, y1 = (int(v) for v in bounds[i])
        x0 = max(x0, 0)
        y0 = max(y0, 0)
        x1 = min(x1, w)
        y1 = min(y1, h)
        if x1 <= x0 or y1 <= y0:
            continue
        t_block = trans[y0:y1, x0:x1]
        live = t_block >= STOP_TRANSMITTANCE
        if not live.any():
            continue
        xs = np.arange(x0, x1, dtype=np.float64) + 0.5 - float(centers[i, 0])
        ys = np.arange(y0, y1, dtype=np.float64) + 0.5 - float(centers[i, 1])
        a, b, c = (float(v) for v in conics[i])
        sigma = -0.5 * (
            a * xs[None, :] ** 2
            + 2.0 * b * ys[:, None] * xs[None, :]
            + c * ys[:, None] ** 2
        )
        wgt = np.minimum(float(alphas[i]) * np.exp(sigma), MAX_SPLAT_WEIGHT)
        wgt = np.where(live, wgt, 0.0)
        contrib = wgt * t_block.astype(np.float64)
        image[y0:y1, x0:x1, :] += contrib[:, :, None] * colors[i].astype(np.float64)
        t_block[:] = (t_block.astype(np.float64) * (1.0 - wgt)).astype(np.float32)


def rasterize_triangles(tris, ids, id_image, invz_image):
    """Rasterize screen-space triangles carrying integer IDs with a depth test.

    ``tris`` is float64 (t, 3, 3): per vertex (x, y, 1/z) with pixel centers
    at integer + 0.5. Coverage is inclusive (barycentric >= 0 after
    orientation normalization); depth test keeps the larger 1/z, strictly, so
    the first triangle in order wins exact ties. ``id_image`` (uint32) and
    ``invz_image`` (float64) are modified in place.
    """
    h, w = id_image.shape
    for i in range(tris.shape[0]):
        ax, ay, iza = tris[i, 0]
        bx, by, izb = tris[i, 1]
        cx, cy, izc = tris[i, 2]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        if area < 0.0:
            bx, by, izb, cx, cy, izc = cx, cy, izc, bx, by, izb
            area = -area
        x0 = max(0, int(np.floor(min(ax, bx, cx) - 0.5)))
        x1 = min(w - 1, int(np.ceil(max(ax, bx, cx) - 0.5)))
        y0 = max(0, int(np.floor(min(ay, by, cy) - 0.5)))
        y1 = min(h - 1, int(np.ceil(max(ay, by, cy) - 0.5)))
        if x1 < x0 or y1 < y0:
            continue
        px = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
        py = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5
        pxg, pyg = np.meshgrid(px, py)
        e0 = (cx - bx) * (pyg - by) - (cy - by) * (pxg - bx)
        e1 = (ax - cx) * (pyg - cy) - (ay - cy) * (pxg - cx)
        e2 = (bx - ax) * (pyg - ay) - (by - ay) * (pxg - ax)
        inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
        if not inside.any():
            continue
        invz = (e0 * iza + e1 * izb + e2 * izc) / area
        zbuf = invz_image[y0 : y1 + 1, x0 : x1 + 1]
        write = inside & (invz > zbuf)
        zbuf[write] = invz[write]
        id_image[y0 : y1 + 1, x0 : x1 + 1][write] = ids[i]


def radix_sort_pairs(keys, values):
    """Stable ascending radix sort of uint32 ``keys`` with an i64 payload.

    Four least-significant-first 8-bit digit passes; the per-digit stable
    ordering is delegated to NumPy's stable argsort. Returns sorted copies.
    """
    keys = np.ascontiguousarray(keys, dtype=np.uint32)
    values = np.ascontiguousarray(values, dtype=np.int64)
    for shift in (0, 8, 16, 24):
        digit = (keys >> np.uint32(shift)) & np.uint32(0xFF)
        order = np.argsort(digit, kind="stable")
        keys = keys[order]
        values = values[order]
    return keys, values


def _closest_point_on_triangle(p, a, b, c):
    """Closest point to ``p`` on triangle (a, b, c) (Ericson's method)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + ab * (d1 / (d1 - d3))
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + ac * (d2 / (d2 - d6))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)))
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def point_triangle_dist2(p, a, b, c):
    q = _closest_point_on_triangle(
        np.asarray(p, dtype=np.float64),
        np.asarray(a, dtype=np.float64),
        np.asarray(b, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
    )
    d = np.asarray(p, dtype=np.float64) - q
    return float(d @ d)


def _aabb_dist2(p, lo, hi):
    d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return float(d @ d)


def bvh_nearest_points(points, bounds, children, ranges, tri_order, tri_verts):
    """Nearest triangle per query point via best-first BVH traversal.

    Flat BVH arrays as built by ``mesh.geometry.FaceBvh``: ``bounds`` (n, 6)
    min/max corners, ``children`` (n, 2) child indices or -1 for leaves,
    ``ranges`` (n, 2) half-open spans into ``tri_order`` for leaves.
    Distance ties resolve to the lowest face index. Returns (faces i64,
    dist float64).
    """
    nq = points.shape[0]
    out_face = np.empty(nq, dtype=np.int64)
    out_dist = np.empty(nq, dtype=np.float64)
    for qi in range(nq):
        p = points[qi].astype(np.float64)
        best_d2 = np.inf
        best_face = -1
        stack = [0]
        while stack:
            node = stack.pop()
            if _aabb_dist2(p, bounds[node, :3], bounds[node, 3:]) > best_d2:
                continue
            left, right = children[node]
            if left < 0:
                for k in range(ranges[node, 0], ranges[node, 1]):
                    face = int(tri_order[k])
                    d2 = point_triangle_dist2(
                        p, tri_verts[face, 0], tri_verts[face, 1], tri_verts[face, 2]
                    )
                    if d2 < best_d2 or (d2 == best_d2 and face < best_face):
                        best_d2 = d2
                        best_face = face
            else:
                dl = _aabb_dist2(p, bounds[left, :3], bounds[left, 3:])
                dr = _aabb_dist2(p, bounds[right, :3], bounds[right, 3:])
                # push farther child first so the nearer is explored first
                if dl <= dr:
                    stack.append(right)
                    stack.append(left)
                else:
                    stack.append(left)
                    stack.append(right)
        out_face[qi] = best_face
        out_dist[qi] = np.sqrt(best_d2)
    return out_face, out_dist
