"""Rigid registration routines producing the matrices recorded in a tree."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import geom
from .errors import (
    DegenerateAngles,
    DegenerateConfiguration,
    InconsistentPoses,
    NoCorrespondences,
    SizeMismatch,
    XformTreeError,
)
from .pointset import PointSet, apply
from .tree import Workspace


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 100
    convergence_rms_delta: float = 1e-7
    max_correspondence_distance: float = 10.0
    allow_scale: bool = False
    # fraction of source points (best pairs) used per round; set it just
    # below the expected overlap when both sets have regions the other lacks
    trim_fraction: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.trim_fraction <= 1.0:
            raise ValueError("trim_fraction must be in (0, 1]")
        if self.convergence_rms_delta <= 0 or self.max_correspondence_distance <= 0:
            raise ValueError("thresholds must be positive")


@dataclass
class RegistrationResult:
    transform: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    pairs: int = 0
    history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class RotationAxis:
    point: np.ndarray
    direction: np.ndarray
    residual: float = 0.0

    def matrix(self, angle: float) -> np.ndarray:
        return geom.rotation(self.direction, angle, center=self.point)


class CoarseFine(NamedTuple):
    rough: np.ndarray
    fine: np.ndarray
    result: RegistrationResult


def _fit(src: np.ndarray, dst: np.ndarray, allow_scale: bool = False) -> np.ndarray:
    """Transform minimising sum |T src_i - dst_i|^2 for (n, 3) arrays."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    a = src - cs
    b = dst - cd
    H = a.T @ b
    U, S, Vt = np.linalg.svd(H)
    if S[0] == 0.0 or S[1] <= 1e-12 * S[0]:
        raise DegenerateConfiguration("points are collinear or coincident")
    d = 1.0 if np.linalg.det(Vt.T @ U.T) > 0 else -1.0
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    c = 1.0
    if allow_scale:
        c = float(np.sum(S * np.diag(D)) / np.sum(a * a))
    m = np.eye(4)
    m[:3, :3] = c * R
    m[:3, 3] = cd - c * R @ cs
    return m


def least_squares_rigid(src: PointSet, dst: PointSet, allow_scale: bool = False) -> RegistrationResult:
    """Closed-form alignment of corresponding points (column i to column i).

    Reflections are excluded; with `allow_scale` one uniform scale factor is
    estimated as well.
    """
    if len(src) != len(dst):
        raise SizeMismatch(f"{len(src)} source vs {len(dst)} destination points")
    if len(src) < 3:
        raise DegenerateConfiguration("at least three correspondences required")
    T = _fit(src.xyz, dst.xyz, allow_scale)
    if np.array_equal(src.xyz, dst.xyz):
        T = np.eye(4)  # record an exact identity, not SVD round-off
    diff = apply(T, src).xyz - dst.xyz
    rms = math.sqrt(float(np.mean(np.sum(diff * diff, axis=1))))
    return RegistrationResult(T, rms, 1, True, len(src), [rms])


def icp(src: PointSet, dst: PointSet, init: np.ndarray | None = None,
        params: IcpParams | None = None) -> RegistrationResult:
    """Point-to-point (trimmed) ICP.

    Each round pairs every moved source point with its nearest destination
    point, keeps the ``trim_fraction`` best pairs inside the gate and refits
    from scratch on the original source coordinates.  The objective is the
    RMS over the kept fraction of the gate-truncated distances
    ``min(d, gate)``; it cannot grow from one round to the next, and a round
    that raises it through rounding is rejected and ends the iteration.
    """
    params = params or IcpParams()
    if len(src) == 0 or len(dst) == 0:
        raise NoCorrespondences("empty point set")
    T = np.eye(4) if init is None else geom.as_mat4(init)
    gate = params.max_correspondence_distance
    keep_n = max(3, int(round(params.trim_fraction * len(src))))
    src_xyz = src.xyz
    dst_xyz = dst.xyz
    index = cKDTree(dst_xyz)

    def evaluate(T):
        d, idx = index.query(apply(T, src).xyz, distance_upper_bound=gate)
        cost = np.minimum(d, gate) ** 2
        best = np.argsort(cost, kind="stable")[:keep_n]
        pairs = best[np.isfinite(d[best])]
        return math.sqrt(float(cost[best].mean())), pairs, idx, d

    history: list[float] = []
    converged = False
    prev = T
    it = 0
    for it in range(1, params.max_iterations + 1):
        obj, pairs, idx, _ = evaluate(T)
        if pairs.size == 0:
            raise NoCorrespondences(f"no pairs within {gate:g} mm at iteration {it}")
        if history and obj > history[-1]:
            T = prev
            converged = True
            break
        history.append(obj)
        if obj <= params.convergence_rms_delta or (
                len(history) > 1 and history[-2] - obj < params.convergence_rms_delta):
            converged = True
            break
        prev = T
        T = _fit(src_xyz[pairs], dst_xyz[idx[pairs]], params.allow_scale)
    else:
        obj = evaluate(T)[0]
        if obj > history[-1]:
            T = prev
        else:
            history.append(obj)

    _, pairs, _, d = evaluate(T)
    if pairs.size == 0:
        raise NoCorrespondences("no pairs within the gate at the final pose")
    residual = math.sqrt(float(np.mean(d[pairs] ** 2)))
    return RegistrationResult(T, residual, it, converged, int(pairs.size), history)


def coarse_then_fine(src: PointSet, dst: PointSet, rough: np.ndarray,
                     params: IcpParams | None = None) -> CoarseFine:
    """ICP seeded with `rough`, split into the rough and the final correction.

    ``fine @ rough`` equals the ICP transform; store them as two stacked
    Transform nodes (fine above rough) to keep the two-step history.
    """
    rough = geom.as_mat4(rough)
    result = icp(src, dst, rough, params)
    fine = result.transform @ geom.invert(rough)
    return CoarseFine(rough, fine, result)


def chain_register(scans: Sequence[PointSet], params: IcpParams | None = None,
                   inits: Sequence[np.ndarray | None] | None = None,
                   labels: Sequence[str] | None = None) -> Workspace:
    """Register each scan to its predecessor and nest the results.

    Produces ``P1 [M1  P2 [M2  P3 [M3 ...]]]``: scan 1 sits under an identity
    placement node and each following scan under the transform that maps it
    into the previous scan, so flattening yields every scan in scan 1's frame.
    """
    if len(scans) < 2:
        raise ValueError("chain registration needs at least two scans")
    labels = list(labels) if labels is not None else [f"scan {i + 1}" for i in range(len(scans))]
    ws = Workspace()
    parent = ws.add_transform(np.eye(4), label="P1", metadata={"role": "placement"})
    ws.add_object(scans[0], parent, labels[0])
    for i in range(1, len(scans)):
        init = None if inits is None else inits[i]
        try:
            res = icp(scans[i], scans[i - 1], init, params)
        except XformTreeError as exc:
            err = type(exc)(f"pair {i + 1}->{i}: {exc}")
            err.pair = i
            raise err from exc
        parent = ws.add_transform(res.transform, parent, label=f"P{i + 1}", metadata={
            "role": "registration",
            "method": "icp",
            "pair": f"{i + 1}->{i}",
            "residual_rms": repr(res.residual_rms),
            "iterations": str(res.iterations),
            "converged": str(res.converged).lower(),
        })
        ws.add_object(scans[i], parent, labels[i])
    return ws


def _vee(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]]) / 2.0


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


def fit_rotation_axis(poses: Sequence[tuple[float, np.ndarray]],
                      max_residual: float = 1e-3) -> RotationAxis:
    """Recover the turntable axis from poses known to be rotations by given angles.

    The direction is the angle-weighted mean of the per-pose rotation axes;
    the point on the axis solves the fixed-point equations ``(R - I) p = -t``
    in least squares, restricted to the plane orthogonal to the direction.
    """
    poses = [(float(a), geom.as_mat4(m)) for a, m in poses]
    if not poses:
        raise DegenerateAngles("no poses")
    angles = [_wrap(a) for a, _ in poses]
    if len({round(a, 12) for a, _ in poses}) < len(poses):
        raise DegenerateAngles("pose angles must be distinct")
    if all(abs(a) < 1e-9 for a in angles):
        raise DegenerateAngles("all poses have zero rotation")

    oriented, ambiguous = [], []
    for w, (_, m) in zip(angles, poses):
        if abs(w) < 1e-9:
            continue
        R = m[:3, :3]
        u = np.linalg.svd(R - np.eye(3))[2][-1]
        v = _vee(R)
        weight = abs(w)
        if np.linalg.norm(v) > 1e-6:
            u = u * np.sign(u @ v) * np.sign(w)
            oriented.append(weight * u)
        else:
            ambiguous.append(weight * u)
    total = sum(oriented, np.zeros(3))
    ref = total if oriented else ambiguous[0]
    for a in ambiguous:
        total += a if a @ ref >= 0 else -a
    direction = total / np.linalg.norm(total)

    basis = np.linalg.svd(direction.reshape(1, 3))[2][1:].T  # 3x2, orthogonal to direction
    A = np.vstack([(m[:3, :3] - np.eye(3)) @ basis for _, m in poses])
    b = np.concatenate([-m[:3, 3] for _, m in poses])
    q = np.linalg.lstsq(A, b, rcond=None)[0]
    point = basis @ q

    probe = point + np.array([[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5)
                              for z in (-0.5, 0.5)])
    probe_h = np.hstack([probe, np.ones((8, 1))]).T
    worst = 0.0
    for (angle, m) in poses:
        model = geom.rotation(direction, angle, center=point)
        diff = (m @ probe_h - model @ probe_h)[:3]
        worst = max(worst, math.sqrt(float(np.mean(np.sum(diff * diff, axis=0)))))
    if worst > max_residual:
        raise InconsistentPoses(f"axis fit residual {worst:.3g} mm exceeds {max_residual:g} mm")
    return RotationAxis(point, direction, worst)


def line_distance(a: RotationAxis, b: RotationAxis, extent: float = 1.0) -> float:
    """Largest distance from line `a` to points of line `b` within `extent` of b's point."""
    worst = 0.0
    for s in (-extent, 0.0, extent):
        x = b.point + s * b.direction - a.point
        worst = max(worst, float(np.linalg.norm(x - (x @ a.direction) * a.direction)))
    return worst
