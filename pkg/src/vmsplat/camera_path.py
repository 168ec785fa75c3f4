"""Camera paths for reproducible benchmark runs.

A path is a list of checkpoint poses plus a travel speed; frames are placed
along it at a fixed rate. Position moves at constant speed along the
piecewise-linear track (arc-length parameterization, not per-segment time),
and orientation slerps between the checkpoints bounding the current segment
using the same within-segment parameter as the position.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from vmsplat.errors import ParseError
from vmsplat.render import Camera


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    q0 = q0 / np.linalg.norm(q0)
    q1 = q1 / np.linalg.norm(q1)
    dot = float(q0 @ q1)
    if dot < 0.0:  # take the short arc
        q1 = -q1
        dot = -dot
    if dot > 0.9995:  # nearly parallel: nlerp is stable and accurate here
        out = q0 + u * (q1 - q0)
        return out / np.linalg.norm(out)
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    a = math.sin((1.0 - u) * theta) / s
    b = math.sin(u * theta) / s
    return a * q0 + b * q1


@dataclass(frozen=True)
class Checkpoint:
    position: tuple
    orientation: tuple  # unit quaternion, w first


@dataclass(frozen=True)
class CameraPath:
    checkpoints: tuple
    speed: float = 1.0
    fps: float = 30.0
    fov_deg: float = 90.0
    width: int = 256
    height: int = 256
    near: float = 0.05
    lengths: tuple = field(init=False, default=())

    def __post_init__(self):
        if len(self.checkpoints) < 2:
            raise ValueError("camera path needs at least two checkpoints")
        if self.speed <= 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        pos = np.array([c.position for c in self.checkpoints], dtype=np.float64)
        seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        object.__setattr__(self, "lengths", tuple(seg))

    @property
    def total_length(self) -> float:
        return float(sum(self.lengths))

    @property
    def duration(self) -> float:
        return self.total_length / self.speed

    @property
    def frame_count(self) -> int:
        return int(math.floor(self.duration * self.fps)) + 1

    def pose_at(self, t: float):
        """Pose after t seconds of travel; clamps beyond either end."""
        s = max(0.0, t) * self.speed
        cps = self.checkpoints
        for i, seg_len in enumerate(self.lengths):
            if seg_len == 0.0:  # duplicated checkpoint, contributes no travel
                continue
            if s <= seg_len:
                u = s / seg_len
                p0 = np.asarray(cps[i].position, dtype=np.float64)
                p1 = np.asarray(cps[i + 1].position, dtype=np.float64)
                pos = p0 + u * (p1 - p0)
                quat = slerp(cps[i].orientation, cps[i + 1].orientation, u)
                return pos, quat
            s -= seg_len
        last = cps[-1]
        return (
            np.asarray(last.position, dtype=np.float64),
            np.asarray(last.orientation, dtype=np.float64),
        )

    def camera_at(self, t: float) -> Camera:
        pos, quat = self.pose_at(t)
        return Camera(
            position=tuple(pos),
            orientation=tuple(quat),
            fov_y=math.radians(self.fov_deg),
            width=self.width,
            height=self.height,
            near=self.near,
        )

    def frame_camera(self, frame: int) -> Camera:
        return self.camera_at(frame / self.fps)


def load_path(path) -> CameraPath:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: cannot read camera path: {exc}") from exc
    try:
        cps = tuple(
            Checkpoint(position=tuple(c["position"]), orientation=tuple(c["orientation"]))
            for c in data["checkpoints"]
        )
        return CameraPath(
            checkpoints=cps,
            speed=float(data.get("speed", 1.0)),
            fps=float(data.get("fps", 30.0)),
            fov_deg=float(data.get("fov_deg", 90.0)),
            width=int(data.get("width", 256)),
            height=int(data.get("height", 256)),
            near=float(data.get("near", 0.05)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad camera path: {exc}") from exc


def save_path(cam_path: CameraPath, path) -> None:
    data = {
        "checkpoints": [
            {"position": list(c.position), "orientation": list(c.orientation)}
            for c in cam_path.checkpoints
        ],
        "speed": cam_path.speed,
        "fps": cam_path.fps,
        "fov_deg": cam_path.fov_deg,
        "width": cam_path.width,
        "height": cam_path.height,
        "near": cam_path.near,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
