"""Hot-loop kernels with a compiled core and a NumPy fallback.

The compiled extension ``_core`` is used when the build produced it;
otherwise the pure NumPy module ``_ref`` serves the same contracts.
``BACKEND`` reports which one is active. ``reference`` always points at
the NumPy module so the compiled core can be checked against it.
"""

from __future__ import annotations

import numpy as np

from vmsplat.kernels import _ref as reference

try:
    from vmsplat.kernels import _core as _impl

    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    _impl = reference
    BACKEND = "numpy"


def composite_splats(centers, conics, colors, alphas, bounds, image):
    """Blend sorted splats into float32 ``image`` (h, w, 3) in place."""
    _impl.composite_splats(
        np.ascontiguousarray(centers, dtype=np.float32),
        np.ascontiguousarray(conics, dtype=np.float32),
        np.ascontiguousarray(colors, dtype=np.float32),
        np.ascontiguousarray(alphas, dtype=np.float32),
        np.ascontiguousarray(bounds, dtype=np.int32),
        image,
    )


def rasterize_triangles(tris, ids, id_image, invz_image):
    """Depth-tested ID rasterization into ``id_image``/``invz_image``."""
    _impl.rasterize_triangles(
        np.ascontiguousarray(tris, dtype=np.float64),
        np.ascontiguousarray(ids, dtype=np.uint32),
        id_image,
        invz_image,
    )


def radix_sort_pairs(keys, values):
    """Stable ascending sort of uint32 keys with an int64 payload."""
    return _impl.radix_sort_pairs(
        np.ascontiguousarray(keys, dtype=np.uint32),
        np.ascontiguousarray(values, dtype=np.int64),
    )


def bvh_nearest_points(points, bounds, children, ranges, tri_order, tri_verts):
    """Nearest mesh face (and distance) for each query point."""
    return _impl.bvh_nearest_points(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(bounds, dtype=np.float64),
        np.ascontiguousarray(children, dtype=np.int32),
        np.ascontiguousarray(ranges, dtype=np.int32),
        np.ascontiguousarray(tri_order, dtype=np.int32),
        np.ascontiguousarray(tri_verts, dtype=np.float64),
    )
