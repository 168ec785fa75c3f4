"""Shared test utilities."""

import numpy as np

PLY_PROPS = 62


def encode_ply(records: np.ndarray) -> bytes:
    """Inverse of the point-file loader: decoded (n, 59) records back to the
    binary layout (62 float32 properties per vertex, normals zeroed)."""
    records = np.asarray(records, dtype=np.float32)
    n = len(records)
    raw = np.zeros((n, PLY_PROPS), dtype="<f4")
    raw[:, 0:3] = records[:, 0:3]
    sh = records[:, 11:].reshape(n, 16, 3)
    raw[:, 6:9] = sh[:, 0, :]
    raw[:, 9:54] = sh[:, 1:, :].transpose(0, 2, 1).reshape(n, 45)
    op = np.clip(records[:, 10].astype(np.float64), 1e-6, 1.0 - 1e-6)
    raw[:, 54] = np.log(op / (1.0 - op))
    raw[:, 55:58] = np.log(records[:, 7:10].astype(np.float64))
    raw[:, 58:62] = records[:, 3:7]

    names = (
        ["x", "y", "z", "nx", "ny", "nz"]
        + [f"f_dc_{i}" for i in range(3)]
        + [f"f_rest_{i}" for i in range(45)]
        + ["opacity"]
        + [f"scale_{i}" for i in range(3)]
        + [f"rot_{i}" for i in range(4)]
    )
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    return ("\n".join(header) + "\n").encode("ascii") + raw.tobytes()


def write_ply(path, records: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ply(records))
