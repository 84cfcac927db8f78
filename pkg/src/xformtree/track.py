"""Time-sampled rigid poses and the ``.mot`` text format.

A ``.mot`` file holds one sample per line::

    t tx ty tz qw qx qy qz

time in seconds, translation in mm, unit quaternion scalar-first.  ``#``
starts a comment.  Poses map the moving part from its reference position to
its position at time ``t``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import TrackFormatError
from .geom import is_rigid

HOLD = "hold"
LINEAR = "linear"
INTERPOLATIONS = (HOLD, LINEAR)


class MotionTrack:
    """Strictly increasing sample times with one rigid pose per sample."""

    __slots__ = ("times", "poses", "interpolation")

    def __init__(self, times: Sequence[float], poses, interpolation: str = HOLD):
        times = np.array(times, dtype=np.float64).reshape(-1)
        poses = np.array(poses, dtype=np.float64).reshape(-1, 4, 4)
        if times.size == 0:
            raise ValueError("a motion track needs at least one sample")
        if poses.shape[0] != times.size:
            raise ValueError("one pose per sample time required")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        for k, pose in enumerate(poses):
            if not is_rigid(pose, 1e-6):
                raise ValueError(f"pose {k} (t={times[k]}) is not rigid")
        times.flags.writeable = False
        poses.flags.writeable = False
        self.times = times
        self.poses = poses
        self.interpolation = interpolation

    def __len__(self) -> int:
        return self.times.size

    def __repr__(self) -> str:
        return (f"MotionTrack(n={len(self)}, t=[{self.times[0]:g}, {self.times[-1]:g}], "
                f"{self.interpolation})")

    def with_interpolation(self, interpolation: str) -> "MotionTrack":
        return MotionTrack(self.times, self.poses, interpolation)

    def sample(self, t: float) -> np.ndarray:
        return sample(self, t)


def sample(track: MotionTrack, t: float) -> np.ndarray:
    """Pose at time `t`; clamps outside the sampled range."""
    times = track.times
    if t <= times[0]:
        return track.poses[0].copy()
    if t >= times[-1]:
        return track.poses[-1].copy()
    k = int(np.searchsorted(times, t, side="right")) - 1
    if times[k] == t or track.interpolation == HOLD:
        return track.poses[k].copy()
    a, b = track.poses[k], track.poses[k + 1]
    f = (t - times[k]) / (times[k + 1] - times[k])
    rel = Rotation.from_matrix(a[:3, :3].T @ b[:3, :3]).as_rotvec()
    out = np.eye(4)
    out[:3, :3] = a[:3, :3] @ Rotation.from_rotvec(f * rel).as_matrix()
    out[:3, 3] = (1.0 - f) * a[:3, 3] + f * b[:3, 3]
    return out


def pose_to_record(pose: np.ndarray) -> tuple[float, ...]:
    x, y, z, w = Rotation.from_matrix(pose[:3, :3]).as_quat()
    if w < 0:
        x, y, z, w = -x, -y, -z, -w
    return (*(float(v) for v in pose[:3, 3]), float(w), float(x), float(y), float(z))


def record_to_pose(values: Sequence[float]) -> np.ndarray:
    tx, ty, tz, qw, qx, qy, qz = values
    out = np.eye(4)
    out[:3, :3] = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
    out[:3, 3] = (tx, ty, tz)
    return out


def parse_mot(text: str, name: str = "<mot>", interpolation: str = HOLD) -> MotionTrack:
    times, poses = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 8:
            raise TrackFormatError(f"{name}: expected 't tx ty tz qw qx qy qz'", lineno, 1)
        try:
            values = [float(v) for v in fields]
        except ValueError as exc:
            raise TrackFormatError(f"{name}: {exc}", lineno, 1) from None
        q = np.array(values[4:])
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise TrackFormatError(f"{name}: quaternion is not unit length", lineno, 1)
        times.append(values[0])
        poses.append(record_to_pose(values[1:]))
    if not times:
        raise TrackFormatError(f"{name}: no samples")
    try:
        return MotionTrack(times, poses, interpolation)
    except ValueError as exc:
        raise TrackFormatError(f"{name}: {exc}") from None


def format_mot(track: MotionTrack) -> str:
    lines = [
        "# t tx ty tz qw qx qy qz",
        "# pose maps reference-position moving points to their position at time t",
    ]
    for t, pose in zip(track.times, track.poses):
        lines.append(" ".join(f"{v:.17g}" for v in (t, *pose_to_record(pose))))
    return "\n".join(lines) + "\n"


def read_mot(path, interpolation: str = HOLD) -> MotionTrack:
    path = Path(path)
    return parse_mot(path.read_text(), str(path), interpolation)


def write_mot(path, track: MotionTrack) -> None:
    Path(path).write_text(format_mot(track))
