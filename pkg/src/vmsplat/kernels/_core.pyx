# cython: language_level=3
# cython: boundscheck=False
# cython: wraparound=False
# cython: cdivision=True
"""Compiled hot loops: splat compositing, ID rasterization, radix sort,
and nearest-face BVH queries.

Contracts match ``vmsplat.kernels._ref``. All math is IEEE double with
contraction disabled at build time, so the two backends agree to within
rounding of transcendental calls.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, floor, sqrt

cnp.import_array()

cdef double STOP_T = 1.0 / 255.0
cdef double MAX_W = 0.99


def composite_splats(const float[:, ::1] centers, const float[:, ::1] conics,
                     const float[:, ::1] colors, const float[::1] alphas,
                     const int[:, ::1] bounds, float[:, :, ::1] image):
    """Front-to-back alpha compositing of sorted splats into ``image``.

    See the reference implementation for the full contract. Coordinates
    must be finite.
    """
    cdef Py_ssize_t n = centers.shape[0]
    cdef Py_ssize_t h = image.shape[0]
    cdef Py_ssize_t w = image.shape[1]
    trans_arr = np.ones((h, w), dtype=np.float32)
    cdef float[:, ::1] trans = trans_arr
    cdef Py_ssize_t i, x, y, x0, x1, y0, y1
    cdef double cx, cy, a, b, c, alpha, dx, dy, wgt, t, sigma
    cdef double r, g, bl
    for i in range(n):
        x0 = bounds[i, 0]
        x1 = bounds[i, 1]
        y0 = bounds[i, 2]
        y1 = bounds[i, 3]
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > w:
            x1 = w
        if y1 > h:
            y1 = h
        if x1 <= x0 or y1 <= y0:
            continue
        cx = centers[i, 0]
        cy = centers[i, 1]
        a = conics[i, 0]
        b = conics[i, 1]
        c = conics[i, 2]
        alpha = alphas[i]
        r = colors[i, 0]
        g = colors[i, 1]
        bl = colors[i, 2]
        for y in range(y0, y1):
            dy = (<double>y + 0.5) - cy
            for x in range(x0, x1):
                t = trans[y, x]
                if t < STOP_T:
                    continue
                dx = (<double>x + 0.5) - cx
                sigma = -0.5 * (a * dx * dx + 2.0 * b * dy * dx + c * dy * dy)
                wgt = alpha * exp(sigma)
                if wgt > MAX_W:
                    wgt = MAX_W
                image[y, x, 0] = <float>(image[y, x, 0] + wgt * t * r)
                image[y, x, 1] = <float>(image[y, x, 1] + wgt * t * g)
                image[y, x, 2] = <float>(image[y, x, 2] + wgt * t * bl)
                trans[y, x] = <float>(t * (1.0 - wgt))


def rasterize_triangles(const double[:, :, ::1] tris, const unsigned int[::1] ids,
                        unsigned int[:, ::1] id_image, double[:, ::1] invz_image):
    """Rasterize screen-space triangles carrying IDs with a 1/z depth test.

    Matches the reference implementation bit for bit: inclusive edge test
    after orientation normalization, strict-greater depth test.
    """
    cdef Py_ssize_t n = tris.shape[0]
    cdef Py_ssize_t h = id_image.shape[0]
    cdef Py_ssize_t w = id_image.shape[1]
    cdef Py_ssize_t i, x, y, x0, x1, y0, y1
    cdef double ax, ay, iza, bx, by, izb, cx, cy, izc, tmp
    cdef double area, minx, maxx, miny, maxy, fx0, fx1, fy0, fy1
    cdef double px, py, e0, e1, e2, invz
    for i in range(n):
        ax = tris[i, 0, 0]
        ay = tris[i, 0, 1]
        iza = tris[i, 0, 2]
        bx = tris[i, 1, 0]
        by = tris[i, 1, 1]
        izb = tris[i, 1, 2]
        cx = tris[i, 2, 0]
        cy = tris[i, 2, 1]
        izc = tris[i, 2, 2]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        if area < 0.0:
            tmp = bx; bx = cx; cx = tmp
            tmp = by; by = cy; cy = tmp
            tmp = izb; izb = izc; izc = tmp
            area = -area
        minx = ax
        if bx < minx: minx = bx
        if cx < minx: minx = cx
        maxx = ax
        if bx > maxx: maxx = bx
        if cx > maxx: maxx = cx
        miny = ay
        if by < miny: miny = by
        if cy < miny: miny = cy
        maxy = ay
        if by > maxy: maxy = by
        if cy > maxy: maxy = cy
        fx0 = floor(minx - 0.5)
        if fx0 < 0.0:
            fx0 = 0.0
        fx1 = ceil(maxx - 0.5)
        if fx1 > <double>(w - 1):
            fx1 = <double>(w - 1)
        fy0 = floor(miny - 0.5)
        if fy0 < 0.0:
            fy0 = 0.0
        fy1 = ceil(maxy - 0.5)
        if fy1 > <double>(h - 1):
            fy1 = <double>(h - 1)
        if fx1 < fx0 or fy1 < fy0:
            continue
        x0 = <Py_ssize_t>fx0
        x1 = <Py_ssize_t>fx1
        y0 = <Py_ssize_t>fy0
        y1 = <Py_ssize_t>fy1
        for y in range(y0, y1 + 1):
            py = <double>y + 0.5
            for x in range(x0, x1 + 1):
                px = <double>x + 0.5
                e0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                if e0 < 0.0:
                    continue
                e1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                if e1 < 0.0:
                    continue
                e2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                if e2 < 0.0:
                    continue
                invz = (e0 * iza + e1 * izb + e2 * izc) / area
                if invz > invz_image[y, x]:
                    invz_image[y, x] = invz
                    id_image[y, x] = ids[i]


def radix_sort_pairs(keys, values):
    """Stable ascending radix sort of uint32 keys with an int64 payload.

    Four least-significant-first 8-bit passes over ping-pong buffers.
    Returns (sorted_keys, sorted_values) as new arrays.
    """
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] k0 = np.ascontiguousarray(keys, dtype=np.uint32).copy()
    cdef cnp.ndarray[cnp.int64_t, ndim=1] v0 = np.ascontiguousarray(values, dtype=np.int64).copy()
    cdef Py_ssize_t n = k0.shape[0]
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] k1 = np.empty(n, dtype=np.uint32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] v1 = np.empty(n, dtype=np.int64)
    cdef unsigned int[::1] ka = k0
    cdef unsigned int[::1] kb = k1
    cdef long long[::1] va = v0
    cdef long long[::1] vb = v1
    cdef unsigned int[::1] kt
    cdef long long[::1] vt
    cdef Py_ssize_t counts[256]
    cdef Py_ssize_t offsets[256]
    cdef Py_ssize_t i, d, total, cnt
    cdef int shift
    cdef unsigned int key
    for shift in (0, 8, 16, 24):
        for d in range(256):
            counts[d] = 0
        for i in range(n):
            counts[(ka[i] >> shift) & 0xFF] += 1
        total = 0
        for d in range(256):
            offsets[d] = total
            total += counts[d]
        for i in range(n):
            key = ka[i]
            d = (key >> shift) & 0xFF
            kb[offsets[d]] = key
            vb[offsets[d]] = va[i]
            offsets[d] += 1
        kt = ka; ka = kb; kb = kt
        vt = va; va = vb; vb = vt
    # four passes: final ordering lands back in the first buffer pair
    return k0, v0


cdef inline double _dist2(double x, double y, double z) noexcept nogil:
    return x * x + y * y + z * z


cdef double _point_tri_dist2(double px, double py, double pz,
                             const double[:, :, ::1] tv, Py_ssize_t f) noexcept nogil:
    # Ericson's closest-point-on-triangle, returning squared distance.
    cdef double ax = tv[f, 0, 0], ay = tv[f, 0, 1], az = tv[f, 0, 2]
    cdef double bx = tv[f, 1, 0], by = tv[f, 1, 1], bz = tv[f, 1, 2]
    cdef double cx = tv[f, 2, 0], cy = tv[f, 2, 1], cz = tv[f, 2, 2]
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double d3, d4, d5, d6, vc, vb, va, v, w, denom
    cdef double bpx, bpy, bpz, cpx, cpy, cpz, qx, qy, qz
    if d1 <= 0.0 and d2 <= 0.0:
        return _dist2(apx, apy, apz)
    bpx = px - bx; bpy = py - by; bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return _dist2(bpx, bpy, bpz)
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return _dist2(apx - v * abx, apy - v * aby, apz - v * abz)
    cpx = px - cx; cpy = py - cy; cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return _dist2(cpx, cpy, cpz)
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return _dist2(apx - w * acx, apy - w * acy, apz - w * acz)
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bx + w * (cx - bx); qy = by + w * (cy - by); qz = bz + w * (cz - bz)
        return _dist2(px - qx, py - qy, pz - qz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = ax + abx * v + acx * w
    qy = ay + aby * v + acy * w
    qz = az + abz * v + acz * w
    return _dist2(px - qx, py - qy, pz - qz)


cdef inline double _aabb_dist2(double px, double py, double pz,
                               const double[:, ::1] bounds, Py_ssize_t node) noexcept nogil:
    cdef double d, acc = 0.0
    d = bounds[node, 0] - px
    if d < 0.0:
        d = px - bounds[node, 3]
    if d > 0.0:
        acc += d * d
    d = bounds[node, 1] - py
    if d < 0.0:
        d = py - bounds[node, 4]
    if d > 0.0:
        acc += d * d
    d = bounds[node, 2] - pz
    if d < 0.0:
        d = pz - bounds[node, 5]
    if d > 0.0:
        acc += d * d
    return acc


def bvh_nearest_points(const double[:, ::1] points, const double[:, ::1] bounds,
                       const int[:, ::1] children, const int[:, ::1] ranges,
                       const int[::1] tri_order, const double[:, :, ::1] tri_verts):
    """Nearest triangle per query point over a flat median-split BVH.

    Distance ties resolve to the lowest face index. Returns
    (faces int64, distances float64).
    """
    cdef Py_ssize_t nq = points.shape[0]
    out_face_arr = np.empty(nq, dtype=np.int64)
    out_dist_arr = np.empty(nq, dtype=np.float64)
    cdef long long[::1] out_face = out_face_arr
    cdef double[::1] out_dist = out_dist_arr
    cdef int stack[128]
    cdef int sp, node, left, right
    cdef Py_ssize_t qi, k, face
    cdef double px, py, pz, best_d2, d2, dl, dr
    cdef double inf = np.inf
    cdef long long best_face
    for qi in range(nq):
        px = points[qi, 0]
        py = points[qi, 1]
        pz = points[qi, 2]
        best_d2 = inf
        best_face = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _aabb_dist2(px, py, pz, bounds, node) > best_d2:
                continue
            left = children[node, 0]
            right = children[node, 1]
            if left < 0:
                for k in range(ranges[node, 0], ranges[node, 1]):
                    face = tri_order[k]
                    d2 = _point_tri_dist2(px, py, pz, tri_verts, face)
                    if d2 < best_d2 or (d2 == best_d2 and face < best_face):
                        best_d2 = d2
                        best_face = face
            else:
                if sp + 2 > 128:
                    raise RuntimeError("BVH traversal stack overflow")
                dl = _aabb_dist2(px, py, pz, bounds, left)
                dr = _aabb_dist2(px, py, pz, bounds, right)
                # push the farther child first so the nearer pops first
                if dl <= dr:
                    stack[sp] = right
                    stack[sp + 1] = left
                else:
                    stack[sp] = left
                    stack[sp + 1] = right
                sp += 2
        out_face[qi] = best_face
        out_dist[qi] = sqrt(best_d2)
    return out_face_arr, out_dist_arr
