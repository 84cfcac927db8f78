"""Motion derived from frame sequences, and replay of motion nodes over time.

Convention: a track pose at time t maps moving-part points from their
reference-frame position to their position at t.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geom
from .errors import InsufficientFrames, RegistrationFailed, XformTreeError
from .pointset import PointSet, apply, write_xyz
from .registration import IcpParams, icp, least_squares_rigid
from .track import HOLD, MotionTrack
from .tree import Motion, Object, Workspace

CONVENTION = "pose(t) maps reference-position moving points to their position at time t"

Frame = tuple[float, PointSet, PointSet]


@dataclass
class DerivedMotion:
    stabilization: list[np.ndarray]   # P_S per frame: frame static -> reference static
    track: MotionTrack
    static_residuals: list[float]
    moving_residuals: list[float]


def _register(src: PointSet, dst: PointSet, params: IcpParams | None):
    if len(src) == len(dst):
        return least_squares_rigid(src, dst)
    return icp(src, dst, np.eye(4), params)


def derive_motion(frames: Sequence[Frame], reference: int = 0,
                  params: IcpParams | None = None,
                  interpolation: str = HOLD) -> DerivedMotion:
    """Split each frame's motion into camera stabilization and part motion.

    Parts correspond by index when their point counts match; otherwise ICP
    from the identity is used, so frames must then start close together.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise InsufficientFrames(f"need at least two frames, got {len(frames)}")
    if not -len(frames) <= reference < len(frames):
        raise IndexError(f"reference frame {reference} out of range")
    _, ref_static, ref_moving = frames[reference]
    stab, poses, s_res, m_res = [], [], [], []
    for i, (t, static, moving) in enumerate(frames):
        try:
            rs = _register(static, ref_static, params)
            stabilized = apply(rs.transform, moving)
            rm = _register(stabilized, ref_moving, params)
        except XformTreeError as exc:
            err = RegistrationFailed(f"frame {i} (t={t:g}): {type(exc).__name__}: {exc}")
            err.frame = i
            raise err from exc
        stab.append(rs.transform)
        poses.append(geom.invert(rm.transform))
        s_res.append(rs.residual_rms)
        m_res.append(rm.residual_rms)
    times = [float(t) for t, _, _ in frames]
    track = MotionTrack(times, poses, interpolation)
    return DerivedMotion(stab, track, s_res, m_res)


def motion_workspace(static: PointSet, moving: PointSet, track: MotionTrack,
                     labels=("static", "motion", "moving")) -> tuple[Workspace, dict[str, int]]:
    """Model with the static part beside a Motion node carrying the moving part."""
    ws = Workspace()
    root = ws.add_group(label="model")
    s = ws.add_object(static, root, labels[0])
    m = ws.add_motion(track, root, labels[1])
    o = ws.add_object(moving, m, labels[2])
    return ws, {"root": root, "static": s, "motion": m, "moving": o}


def pose_at(ws: Workspace, n: int, t: float) -> np.ndarray:
    return ws.cumulative_transform(n, float(t))


def export_animation(ws: Workspace, moving_root: int, times: Sequence[float]) -> list[tuple[float, PointSet]]:
    """World points of the subtree under `moving_root` at every time."""
    times = [float(t) for t in times]
    if not times:
        raise ValueError("no times given")
    ws.node(moving_root)
    return [(t, ws.flatten(moving_root, t)) for t in times]


def has_motion_above(ws: Workspace, n: int) -> bool:
    return any(isinstance(ws.node(k).payload, Motion) for k in ws.path(n))


def static_objects(ws: Workspace) -> list[int]:
    """Objects whose world pose cannot depend on time."""
    return [n for n in ws.walk() if isinstance(ws.node(n).payload, Object)
            and not has_motion_above(ws, n)]


def write_animation(frames: Sequence[tuple[float, PointSet]], outdir, extra: dict | None = None) -> Path:
    """Write ``frame_00000.xyz`` ... plus ``manifest.json``; returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (t, pts) in enumerate(frames):
        name = f"frame_{k:05d}.xyz"
        write_xyz(outdir / name, pts)
        entries.append({"frame": k, "t": t, "file": name, "points": len(pts)})
    manifest = {"convention": CONVENTION, "time_unit": "s", "frames": entries}
    manifest.update(extra or {})
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
