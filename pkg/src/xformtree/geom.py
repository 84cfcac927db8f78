"""Homogeneous 4x4 transform algebra.

Matrices are plain ``numpy`` arrays of shape (4, 4), float64, row-major, and
act on column vectors: ``p' = m @ p``.  ``compose(a, b)`` applies ``b`` first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidRotation, NotTrsFactorable, SingularMatrix

EPS_DET = 1e-12
EPS_ORTH = 1e-9
EPS_SHEAR = 1e-9
EPS_MAT = 1e-9

_BOTTOM = np.array([0.0, 0.0, 0.0, 1.0])


def identity() -> np.ndarray:
    return np.eye(4)


def as_mat4(values) -> np.ndarray:
    """Coerce 16 numbers (flat, row-major) or a 4x4 nested sequence to a matrix."""
    m = np.array(values, dtype=np.float64)
    if m.shape == (16,):
        m = m.reshape(4, 4)
    if m.shape != (4, 4):
        raise ValueError(f"expected 16 values or a 4x4 array, got shape {m.shape}")
    return m


def translation(t: Sequence[float]) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = t
    return m


def scaling(s: float | Sequence[float]) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = np.diag(np.broadcast_to(np.asarray(s, dtype=float), (3,)))
    return m


def rotation_matrix(axis: Sequence[float], angle: float) -> np.ndarray:
    """3x3 rotation by `angle` radians about `axis` (right-handed, Rodrigues)."""
    u = np.asarray(axis, dtype=float)
    n = np.linalg.norm(u)
    if n == 0:
        raise ValueError("rotation axis must be non-zero")
    x, y, z = u / n
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def rotation(axis: Sequence[float], angle: float, center: Sequence[float] | None = None) -> np.ndarray:
    """4x4 rotation about the line through `center` (origin by default)."""
    m = np.eye(4)
    R = rotation_matrix(axis, angle)
    m[:3, :3] = R
    if center is not None:
        c = np.asarray(center, dtype=float)
        m[:3, 3] = c - R @ c
    return m


def rigid(R: np.ndarray, t: Sequence[float]) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = R
    m[:3, 3] = t
    return m


def is_affine(m: np.ndarray) -> bool:
    return m.shape == (4, 4) and bool(np.all(m[3] == _BOTTOM))


def is_singular(m: np.ndarray) -> bool:
    """True when the linear block is singular relative to its own magnitude."""
    A = m[:3, :3]
    scale = float(np.max(np.abs(A)))
    if not np.isfinite(scale) or scale == 0.0:
        return True
    return abs(np.linalg.det(A)) <= EPS_DET * scale**3


def compose(*mats: np.ndarray) -> np.ndarray:
    """Product ``mats[0] @ mats[1] @ ...``; the last matrix is applied first."""
    if not mats:
        return np.eye(4)
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


def invert(m: np.ndarray) -> np.ndarray:
    if is_affine(m):
        if is_singular(m):
            raise SingularMatrix(f"linear block determinant {np.linalg.det(m[:3, :3]):.3g} is too small")
        Ainv = np.linalg.inv(m[:3, :3])
        out = np.eye(4)
        out[:3, :3] = Ainv
        out[:3, 3] = -Ainv @ m[:3, 3]
        return out
    scale = float(np.max(np.abs(m)))
    if scale == 0.0 or abs(np.linalg.det(m)) <= EPS_DET * scale**4:
        raise SingularMatrix("matrix is singular")
    return np.linalg.inv(m)


@dataclass(frozen=True, eq=False)
class Trs:
    """Translation / rotation / per-axis scale factors of ``T @ R @ S``."""

    translation: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray

    @classmethod
    def make(cls, translation=(0.0, 0.0, 0.0), rotation=None, scale=1.0) -> "Trs":
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        s = np.broadcast_to(np.asarray(scale, dtype=float), (3,)).copy()
        return cls(np.asarray(translation, dtype=float), R, s)


def from_trs(d: Trs) -> np.ndarray:
    R = np.asarray(d.rotation, dtype=float)
    if R.shape != (3, 3):
        raise InvalidRotation(f"rotation must be 3x3, got {R.shape}")
    if np.max(np.abs(R.T @ R - np.eye(3))) > EPS_ORTH:
        raise InvalidRotation("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > EPS_ORTH:
        raise InvalidRotation("rotation is a reflection")
    s = np.asarray(d.scale, dtype=float)
    if np.any(s <= 0):
        raise InvalidRotation("scale factors must be positive")
    m = np.eye(4)
    m[:3, :3] = R * s  # R @ diag(s)
    m[:3, 3] = d.translation
    return m


def _factor(m: np.ndarray):
    """Return (t, R, s, shear, det) for the affine matrix `m`."""
    if is_singular(m):
        raise SingularMatrix("linear block is singular")
    A = m[:3, :3]
    s = np.linalg.norm(A, axis=0)
    B = A / s
    U, _, Vt = np.linalg.svd(B)
    R = U @ Vt
    det = np.linalg.det(R)
    if det < 0:
        # closest proper rotation; the reflection itself is reported via det
        U[:, 2] *= -1
        R = U @ Vt
    resid = R.T @ B - np.eye(3)
    shear = float(np.max(np.abs(resid - np.diag(np.diag(resid)))))
    return m[:3, 3].copy(), R, s, shear, det


def decompose_trs(m: np.ndarray, shear_tol: float = EPS_SHEAR) -> Trs:
    if not is_affine(m):
        raise NotTrsFactorable("bottom row is not (0, 0, 0, 1)")
    t, R, s, shear, det = _factor(m)
    if det < 0:
        raise NotTrsFactorable("linear block contains a reflection")
    if shear > shear_tol:
        raise NotTrsFactorable(f"shear residual {shear:.3g} exceeds {shear_tol:.3g}")
    return Trs(t, R, s)


def is_rigid(m: np.ndarray, tol: float = 1e-6) -> bool:
    if not is_affine(m):
        return False
    try:
        _, _, s, shear, det = _factor(m)
    except SingularMatrix:
        return False
    return det > 0 and shear <= tol and bool(np.max(np.abs(s - 1.0)) <= tol)


def matrices_close(a: np.ndarray, b: np.ndarray, tol: float = EPS_MAT) -> bool:
    return bool(np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol)


def flat(m: np.ndarray) -> tuple[float, ...]:
    """Row-major 16-tuple."""
    return tuple(float(v) for v in np.asarray(m).reshape(16))


def stack(mats: Iterable[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(m, dtype=float) for m in mats])
