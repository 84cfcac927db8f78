"""Synthetic data with known ground truth: random transforms and trees,
surface patches, a ring of overlapping head-scan crops and a hinge motion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import geom
from .pointset import PointSet, apply
from .track import MotionTrack
from .tree import Workspace


def random_rotation(rng: np.random.Generator, max_angle: float = np.pi) -> np.ndarray:
    axis = rng.normal(size=3)
    return geom.rotation_matrix(axis, rng.uniform(-max_angle, max_angle))


def random_rigid(rng: np.random.Generator, max_angle: float = np.pi, max_shift: float = 10.0) -> np.ndarray:
    return geom.rigid(random_rotation(rng, max_angle), rng.uniform(-max_shift, max_shift, 3))


def random_affine(rng: np.random.Generator, max_shift: float = 10.0,
                  scale_range: tuple[float, float] = (0.5, 2.0)) -> np.ndarray:
    """Well-conditioned T @ R @ S with per-axis scale in `scale_range`."""
    trs = geom.Trs.make(rng.uniform(-max_shift, max_shift, 3), random_rotation(rng),
                        rng.uniform(*scale_range, 3))
    return geom.from_trs(trs)


def perturb(rng: np.random.Generator, m: np.ndarray, angle: float, shift: float) -> np.ndarray:
    """`m` moved by a rotation of exactly `angle` and a shift of exactly `shift` length."""
    d = rng.normal(size=3)
    d *= shift / np.linalg.norm(d)
    return geom.translation(d) @ geom.rotation(rng.normal(size=3), angle) @ m


def random_points(rng: np.random.Generator, n: int, scale: float = 10.0) -> PointSet:
    return PointSet.from_xyz(rng.uniform(-scale, scale, (n, 3)))


def _height(x, y):
    return (6.0 * np.sin(x / 9.0) * np.cos(y / 13.0) + 0.004 * x * x - 0.003 * x * y
            + 3.0 * np.exp(-((x - 8) ** 2 + (y + 5) ** 2) / 60.0))


def bumpy_patch(rng: np.random.Generator, n: int = 900, size: float = 60.0) -> PointSet:
    """Randomly sampled height field without sliding symmetries.

    Random rather than grid sampling: a regular grid lets ICP lock onto
    whole-cell offsets.
    """
    x, y = rng.uniform(-size / 2, size / 2, (2, n))
    return PointSet.from_xyz(np.column_stack([x, y, _height(x, y)]))


@dataclass
class OverlapPair:
    src: PointSet          # crop B in its own frame
    dst: PointSet          # crop A in the common frame
    truth: np.ndarray      # truth @ src lands on the common frame
    overlap: np.ndarray    # mask over src points lying inside A
    spacing: float         # mean nearest-neighbour distance


def overlap_pair(rng: np.random.Generator, length: float = 60.0, n: int = 3000,
                 overlap: float = 0.6) -> OverlapPair:
    """Two crops of one sampled height field sharing `overlap` of their length.

    Both crops come from the same samples, so overlapping points coincide
    exactly once aligned.
    """
    x = rng.uniform(0.0, (2.0 - overlap) * length, n)
    y = rng.uniform(-30.0, 30.0, n)
    world = PointSet.from_xyz(np.column_stack([x, y, _height(x - 40.0, y)]))
    a = world.select(x <= length)
    in_b = x >= (1.0 - overlap) * length
    b = world.select(in_b)
    truth = random_rigid(rng, np.pi, 50.0)
    d, _ = cKDTree(a.xyz).query(a.xyz, k=2)
    return OverlapPair(apply(geom.invert(truth), b), a, truth, x[in_b] <= length, float(d[:, 1].mean()))


_FEATURES = np.random.default_rng(7).uniform([0.0, -45.0, 3.0, 8.0], [360.0, 45.0, 9.0, 16.0], (40, 4))


def head_surface(rng: np.random.Generator, n: int = 12000):
    """Randomly sampled closed band around a head-like surface.

    The radius carries 40 fixed Gaussian bumps (azimuth, height, amplitude,
    width), so no rigid motion slides the surface onto itself.
    Returns (points, azimuth) where azimuth in degrees is used to crop scans.
    """
    phi = rng.uniform(0.0, 2 * np.pi, n)
    z = rng.uniform(-50.0, 50.0, n)
    r = 85.0 + 0.002 * z * z
    for az, zc, amp, width in _FEATURES:
        arc = 85.0 * (np.angle(np.exp(1j * (phi - np.deg2rad(az)))))
        r = r + amp * np.exp(-(arc ** 2 + (z - zc) ** 2) / (2 * width ** 2))
    xyz = np.column_stack([r * np.cos(phi) * 0.9, r * np.sin(phi), z * 1.2])
    return PointSet.from_xyz(xyz), np.rad2deg(phi)


@dataclass
class RingFixture:
    world: list[PointSet]      # crops in the common frame
    scans: list[PointSet]      # crops in their own scanner frames
    poses: list[np.ndarray]    # world = poses[i] @ scans[i], poses[0] = I
    rough: list[np.ndarray]    # rough[i] ~ inv(poses[i-1]) @ poses[i]; rough[0] = I

    def relative(self, i: int) -> np.ndarray:
        """Exact transform taking scan i into scan i-1."""
        return geom.invert(self.poses[i - 1]) @ self.poses[i]


def ring_fixture(rng: np.random.Generator, n_crops: int = 6, width_deg: float = 100.0,
                 rough_angle: float = np.deg2rad(0.5), rough_shift: float = 0.5) -> RingFixture:
    """Overlapping crops around a head surface, each in its own scanner frame.

    Neighbouring crops share ``width_deg - 360 / n_crops`` degrees of azimuth.
    `rough` holds pairwise initial estimates off by exactly `rough_angle`
    and `rough_shift`, the kind of error a manual pre-alignment leaves.
    """
    surface, azimuth = head_surface(rng)
    step = 360.0 / n_crops
    world, scans, poses, rough = [], [], [], [np.eye(4)]
    for i in range(n_crops):
        lo = i * step - (width_deg - step) / 2
        rel = (azimuth - lo) % 360.0
        crop = surface.select(rel < width_deg)
        pose = np.eye(4) if i == 0 else random_rigid(rng, np.pi, 100.0)
        world.append(crop)
        scans.append(apply(geom.invert(pose), crop))
        poses.append(pose)
        if i:
            rough.append(perturb(rng, geom.invert(poses[i - 1]) @ pose, rough_angle, rough_shift))
    return RingFixture(world, scans, poses, rough)


@dataclass
class HingeFixture:
    times: np.ndarray
    static: PointSet           # reference-frame static part
    moving: PointSet           # reference-frame moving part
    rotations: list[np.ndarray]  # ground-truth moving pose per frame
    cameras: list[np.ndarray]    # per-frame acquisition pose
    frames: list[tuple[float, PointSet, PointSet]]

    def stabilized(self, i: int) -> list[PointSet]:
        return [self.static, apply(self.rotations[i], self.moving)]


def hinge_fixture(rng: np.random.Generator, n_frames: int = 10, noise: float = 0.0,
                  axis_point=(0.0, 40.0, -20.0), axis_dir=(1.0, 0.0, 0.0),
                  max_opening: float = np.deg2rad(25.0)) -> HingeFixture:
    """A mandible-like part opening about a fixed hinge under a moving camera.

    Frame i observes ``camera_i @ static`` and ``camera_i @ rotation_i @ moving``.
    Frame 0 is the reference: identity camera, zero opening.  `noise` is the
    RMS 3D displacement added to every observed point.
    """
    static = PointSet.from_xyz(rng.uniform([-40, 0, 0], [40, 60, 40], (300, 3)))
    moving = PointSet.from_xyz(rng.uniform([-35, -10, -60], [35, 50, -25], (300, 3)))
    times = np.linspace(0.0, 0.9, n_frames)
    openings = max_opening * np.sin(np.pi * times / times[-1]) ** 2
    rotations, cameras, frames = [], [], []
    for i, (t, theta) in enumerate(zip(times, openings)):
        rot = geom.rotation(axis_dir, theta, center=axis_point)
        cam = np.eye(4) if i == 0 else random_rigid(rng, np.deg2rad(5.0), 5.0)
        s = apply(cam, static)
        m = apply(cam @ rot, moving)
        if noise:
            s = jitter(rng, s, noise)
            m = jitter(rng, m, noise)
        rotations.append(rot)
        cameras.append(cam)
        frames.append((float(t), s, m))
    return HingeFixture(times, static, moving, rotations, cameras, frames)


def jitter(rng: np.random.Generator, m: PointSet, sigma: float) -> PointSet:
    """Isotropic Gaussian noise with RMS 3D displacement `sigma`."""
    return PointSet.from_xyz(m.xyz + rng.normal(scale=sigma / np.sqrt(3.0), size=m.xyz.shape), m.tags)


def track_from(times, poses, interpolation: str = "hold") -> MotionTrack:
    return MotionTrack(times, poses, interpolation)


def random_tree(rng: np.random.Generator, max_nodes: int = 200, max_depth: int = 8,
                points: int = 4, affine: bool = True) -> Workspace:
    """Random single-model tree mixing Transform, Group and Object nodes."""
    ws = Workspace()
    n_nodes = int(rng.integers(2, max_nodes + 1))
    root = ws.add_group(label="root")
    depth = {root: 0}
    for k in range(1, n_nodes):
        open_nodes = [n for n, d in depth.items() if d < max_depth]
        parent = open_nodes[int(rng.integers(len(open_nodes)))]
        u = rng.random()
        if u < 0.45:
            m = random_affine(rng) if affine else random_rigid(rng)
            n = ws.add_transform(m, parent, f"T{k}")
        elif u < 0.55:
            n = ws.add_group(parent, f"G{k}")
        else:
            n = ws.add_object(random_points(rng, points), parent, f"O{k}")
        depth[n] = depth[parent] + 1
    return ws
