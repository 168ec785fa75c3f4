"""Gaussian record layout and conversions.

A scene is a dense ``(n, 59)`` float32 matrix, one row per Gaussian:

====== ======= ==========================================================
column  width  meaning
====== ======= ==========================================================
0..2      3    position (scene units)
3..6      4    rotation quaternion (w, x, y, z), unit norm
7..9      3    per-axis scale, linear standard deviations
10        1    opacity in [0, 1]
11..58   48    spherical harmonics, 16 coefficients x 3 channels,
               coefficient-major: sh[c * 3 + ch]
====== ======= ==========================================================

A padding record is all zeros (opacity 0 renders to nothing). The flat row
layout makes a page one contiguous byte range, which is what the streaming
runtime copies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RECORD_SIZE = 59
SH_COEFFS = 16
POS = slice(0, 3)
ROT = slice(3, 7)
SCALE = slice(7, 10)
OPACITY = 10
SH = slice(11, 59)


@dataclass
class Gaussian:
    """One splat, unpacked. Convenience view over a record row."""

    position: np.ndarray
    rotation: np.ndarray  # (w, x, y, z)
    scale: np.ndarray
    opacity: float
    sh: np.ndarray  # (16, 3) coefficient-major

    @classmethod
    def from_record(cls, row: np.ndarray) -> "Gaussian":
        row = np.asarray(row, dtype=np.float32)
        return cls(
            position=row[POS].copy(),
            rotation=row[ROT].copy(),
            scale=row[SCALE].copy(),
            opacity=float(row[OPACITY]),
            sh=row[SH].reshape(SH_COEFFS, 3).copy(),
        )

    def to_record(self) -> np.ndarray:
        row = np.empty(RECORD_SIZE, dtype=np.float32)
        row[POS] = self.position
        row[ROT] = self.rotation
        row[SCALE] = self.scale
        row[OPACITY] = self.opacity
        row[SH] = np.asarray(self.sh, dtype=np.float32).reshape(-1)
        return row


def padding_records(count: int) -> np.ndarray:
    return np.zeros((count, RECORD_SIZE), dtype=np.float32)


def is_padding(records: np.ndarray) -> np.ndarray:
    """Boolean mask of all-zero rows."""
    return ~records.any(axis=1)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from unit quaternion(s) in (w, x, y, z) order.

    Accepts shape (4,) or (n, 4); returns (3, 3) or (n, 3, 3).
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q = q[None, :]
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m[0] if single else m
