"""Homogeneous point sets (4 x n, one point per column) and their file formats."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptySet, GeometryFormatError, SizeMismatch

NO_TAG = -1


class PointSet:
    """A 4 x n matrix of homogeneous coordinates with optional per-point tags.

    Tags record the node id each point came from when sets are flattened out of
    a tree; untagged points carry ``NO_TAG`` once mixed with tagged ones.
    Instances are read-only.
    """

    __slots__ = ("coords", "tags")

    def __init__(self, coords: np.ndarray, tags: np.ndarray | None = None):
        coords = np.array(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[0] != 4:
            raise ValueError(f"coordinates must be 4 x n, got {coords.shape}")
        if not np.all(coords[3] == 1.0):
            raise ValueError("fourth coordinate of every point must be 1")
        coords.flags.writeable = False
        if tags is not None:
            tags = np.array(tags, dtype=np.int64).reshape(-1)
            if tags.shape[0] != coords.shape[1]:
                raise SizeMismatch("one tag per point required")
            tags.flags.writeable = False
        self.coords = coords
        self.tags = tags

    @classmethod
    def from_xyz(cls, xyz, tags=None) -> "PointSet":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        coords = np.ones((4, xyz.shape[0]))
        coords[:3] = xyz.T
        return cls(coords, tags)

    @classmethod
    def empty(cls) -> "PointSet":
        return cls(np.ones((4, 0)))

    @property
    def xyz(self) -> np.ndarray:
        """(n, 3) view of the Cartesian coordinates."""
        return self.coords[:3].T

    def __len__(self) -> int:
        return self.coords.shape[1]

    def __repr__(self) -> str:
        return f"PointSet(n={len(self)}, tagged={self.tags is not None})"

    def with_tag(self, tag: int) -> "PointSet":
        return PointSet(self.coords, np.full(len(self), tag, dtype=np.int64))

    def select(self, mask_or_index) -> "PointSet":
        tags = None if self.tags is None else self.tags[mask_or_index]
        return PointSet(self.coords[:, mask_or_index], tags)

    def by_tag(self) -> dict[int, "PointSet"]:
        if self.tags is None:
            return {NO_TAG: self}
        return {int(t): self.select(self.tags == t) for t in np.unique(self.tags)}


def apply(p: np.ndarray, m: PointSet) -> PointSet:
    """Transform every point: column i of the result is ``p @ m[:, i]``.

    Evaluated column-independently so the result for a point never depends on
    which other points share the set.
    """
    c = m.coords
    out = np.empty_like(c)
    for r in range(3):
        out[r] = p[r, 0] * c[0] + p[r, 1] * c[1] + p[r, 2] * c[2] + p[r, 3]
    out[3] = 1.0
    return PointSet(out, m.tags)


def concat(parts: Sequence[PointSet]) -> PointSet:
    parts = list(parts)
    if not parts:
        return PointSet.empty()
    coords = np.concatenate([p.coords for p in parts], axis=1)
    if all(p.tags is None for p in parts):
        return PointSet(coords)
    tags = np.concatenate([
        p.tags if p.tags is not None else np.full(len(p), NO_TAG, dtype=np.int64)
        for p in parts
    ])
    return PointSet(coords, tags)


def rms_distance(a: PointSet, b: PointSet) -> float:
    if len(a) != len(b):
        raise SizeMismatch(f"{len(a)} vs {len(b)} points")
    if len(a) == 0:
        raise EmptySet("rms distance of empty sets")
    d = a.coords[:3] - b.coords[:3]
    return math.sqrt(float(np.mean(np.sum(d * d, axis=0))))


def centroid(m: PointSet) -> np.ndarray:
    if len(m) == 0:
        raise EmptySet("centroid of an empty set")
    return np.mean(m.coords[:3], axis=1)


# --- file formats ----------------------------------------------------------

XYZ_SUFFIXES = {".xyz", ".txt", ".pts"}
OBJ_SUFFIXES = {".obj"}


def parse_xyz(text: str, name: str = "<xyz>") -> PointSet:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 3:
            raise GeometryFormatError(f"{name}: expected x y z", lineno, 1)
        try:
            rows.append([float(v) for v in fields[:3]])
        except ValueError as exc:
            raise GeometryFormatError(f"{name}: {exc}", lineno, 1) from None
    return PointSet.from_xyz(np.array(rows, dtype=float).reshape(-1, 3))


def parse_obj(text: str, name: str = "<obj>") -> PointSet:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        fields = raw.split("#", 1)[0].split()
        if not fields or fields[0] != "v":
            continue
        if len(fields) < 4:
            raise GeometryFormatError(f"{name}: vertex needs three coordinates", lineno, 1)
        try:
            x, y, z = (float(v) for v in fields[1:4])
        except ValueError as exc:
            raise GeometryFormatError(f"{name}: {exc}", lineno, 1) from None
        w = float(fields[4]) if len(fields) > 4 else 1.0
        rows.append([x / w, y / w, z / w])
    return PointSet.from_xyz(np.array(rows, dtype=float).reshape(-1, 3))


def format_xyz(m: PointSet) -> str:
    return "".join(f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in m.xyz)


def read_xyz(path) -> PointSet:
    path = Path(path)
    return parse_xyz(path.read_text(), str(path))


def read_obj(path) -> PointSet:
    path = Path(path)
    return parse_obj(path.read_text(), str(path))


def write_xyz(path, m: PointSet) -> None:
    Path(path).write_text(format_xyz(m))


def is_supported(path) -> bool:
    return Path(path).suffix.lower() in XYZ_SUFFIXES | OBJ_SUFFIXES


def load_geometry(path) -> PointSet:
    """Read an XYZ or OBJ file; other suffixes raise `GeometryFormatError`."""
    suffix = Path(path).suffix.lower()
    if suffix in XYZ_SUFFIXES:
        return read_xyz(path)
    if suffix in OBJ_SUFFIXES:
        return read_obj(path)
    raise GeometryFormatError(f"{path}: unsupported geometry format {suffix!r}")
