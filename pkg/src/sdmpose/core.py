"""Pose and dictionary value types with the centring helpers.

Joint matrices are stored as ``(rows, P)`` float arrays: 3 rows (x, y, z)
for 3D poses and 2 rows for 2D observations.  Arrays held by the value
types are private read-only copies, so instances can be shared freely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidDictionary, InvalidPose

CENTER_TOL = 1e-9
NORM_TOL = 1e-9
# Tolerance used when validating dictionaries read from outside the library.
BOUNDARY_TOL = 1e-6


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def _check_joints(joints: np.ndarray, rows: int, what: str) -> None:
    if joints.ndim != 2 or joints.shape[0] != rows:
        raise InvalidPose(f"{what} must have shape ({rows}, P), got {joints.shape}")
    if joints.shape[1] < 2:
        raise InvalidPose(f"{what} needs at least 2 joints, got {joints.shape[1]}")
    if not np.all(np.isfinite(joints)):
        raise InvalidPose(f"{what} contains non-finite coordinates")


@dataclass(frozen=True)
class Pose3D:
    """A 3 x P matrix of joint coordinates (millimetres by convention)."""

    joints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "joints", _frozen(self.joints))
        _check_joints(self.joints, 3, "Pose3D")

    @property
    def n_joints(self) -> int:
        return self.joints.shape[1]

    @property
    def centered(self) -> bool:
        return bool(np.all(np.abs(self.joints.mean(axis=1)) <= CENTER_TOL))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.joints, dtype=dtype)


@dataclass(frozen=True)
class Pose2D:
    """A 2 x P matrix of observed joint coordinates."""

    joints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "joints", _frozen(self.joints))
        _check_joints(self.joints, 2, "Pose2D")

    @property
    def n_joints(self) -> int:
        return self.joints.shape[1]

    @property
    def centered(self) -> bool:
        return bool(np.all(np.abs(self.joints.mean(axis=1)) <= CENTER_TOL))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.joints, dtype=dtype)


class DictKind(str, enum.Enum):
    GLOBAL_STRUCTURE = "global_structure"
    DEFORMATION = "deformation"


def dictionary_violations(atoms: np.ndarray) -> tuple[float, float]:
    """Return the worst centering error and the worst norm excess over 1."""
    if atoms.shape[0] == 0:
        return 0.0, 0.0
    centering = float(np.max(np.abs(atoms.mean(axis=2))))
    norms = np.sqrt(np.sum(atoms**2, axis=(1, 2)))
    return centering, float(np.max(norms) - 1.0)


@dataclass(frozen=True)
class PoseDictionary:
    """An ordered set of k basis poses, stored as a ``(k, 3, P)`` array.

    Atoms must be centred and have Frobenius norm at most one.  ``tol`` is
    the slack allowed on both constraints at construction time.
    """

    atoms: np.ndarray
    kind: DictKind = DictKind.GLOBAL_STRUCTURE
    tol: float = field(default=BOUNDARY_TOL, compare=False, repr=False)

    def __post_init__(self):
        atoms = _frozen(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "kind", DictKind(self.kind))
        if atoms.ndim != 3 or atoms.shape[1] != 3 or atoms.shape[0] < 1:
            raise InvalidDictionary(f"atoms must have shape (k, 3, P) with k >= 1, got {atoms.shape}")
        if atoms.shape[2] < 2:
            raise InvalidDictionary("atoms need at least 2 joints")
        if not np.all(np.isfinite(atoms)):
            raise InvalidDictionary("atoms contain non-finite values")
        centering, excess = dictionary_violations(atoms)
        if centering > self.tol:
            raise InvalidDictionary(f"atom not centred (max row mean {centering:.3g})")
        if excess > self.tol:
            raise InvalidDictionary(f"atom norm exceeds 1 by {excess:.3g}")

    @property
    def k(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_joints(self) -> int:
        return self.atoms.shape[2]

    def matrix(self) -> np.ndarray:
        """Atoms as columns of a ``(3P, k)`` matrix (row-major flattening)."""
        return self.atoms.reshape(self.k, -1).T


@dataclass(frozen=True)
class Codes:
    """Sparse global-structure code ``c_u`` and dense deformation code ``c_v``."""

    c_u: np.ndarray
    c_v: np.ndarray

    def __post_init__(self):
        for name in ("c_u", "c_v"):
            v = _frozen(getattr(self, name))
            if v.ndim != 1:
                raise DimensionMismatch(f"{name} must be a vector, got shape {v.shape}")
            if not np.all(np.isfinite(v)):
                raise InvalidPose(f"{name} contains non-finite values")
            object.__setattr__(self, name, v)

    @classmethod
    def zeros(cls, k_u: int, k_v: int) -> Codes:
        return cls(np.zeros(k_u), np.zeros(k_v))


@dataclass(frozen=True)
class CameraMatrix:
    """The 2 x 3 weak-perspective matrix ``R* = s * R[:2]``."""

    m: np.ndarray

    def __post_init__(self):
        m = _frozen(self.m)
        if m.shape != (2, 3):
            raise DimensionMismatch(f"camera must be 2x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidPose("camera contains non-finite values")
        object.__setattr__(self, "m", m)

    @classmethod
    def from_scale_rotation(cls, scale: float, rotation) -> CameraMatrix:
        rotation = np.asarray(rotation, dtype=float)
        if rotation.shape != (3, 3):
            raise DimensionMismatch(f"rotation must be 3x3, got {rotation.shape}")
        if scale < 0:
            raise ValueError("scale must be non-negative")
        return cls(scale * rotation[:2])

    @classmethod
    def identity(cls) -> CameraMatrix:
        return cls(np.eye(2, 3))

    @property
    def scale(self) -> float:
        """Mean row norm; equals ``s`` for an isotropic camera."""
        return float(np.linalg.norm(self.m, axis=1).mean())


def as_joints(p, rows: int | None = None) -> np.ndarray:
    """Return the joint matrix of a pose object or array-like."""
    arr = p.joints if isinstance(p, (Pose3D, Pose2D)) else np.asarray(p, dtype=float)
    if rows is not None and (arr.ndim != 2 or arr.shape[0] != rows):
        raise DimensionMismatch(f"expected a ({rows}, P) joint matrix, got shape {arr.shape}")
    return arr


def center_pose(p: Pose3D) -> tuple[Pose3D, np.ndarray]:
    """Remove the per-axis joint mean; returns the centred pose and the offset."""
    joints = as_joints(p, 3)
    if not np.all(np.isfinite(joints)):
        raise InvalidPose("pose contains non-finite coordinates")
    offset = joints.mean(axis=1)
    return Pose3D(joints - offset[:, None]), offset


def center_pose2d(p: Pose2D) -> tuple[Pose2D, np.ndarray]:
    joints = as_joints(p, 2)
    if not np.all(np.isfinite(joints)):
        raise InvalidPose("pose contains non-finite coordinates")
    offset = joints.mean(axis=1)
    return Pose2D(joints - offset[:, None]), offset


def check_pair(dict_u: PoseDictionary, dict_v: PoseDictionary | None, codes: Codes | None = None) -> None:
    if dict_v is not None and dict_v.n_joints != dict_u.n_joints:
        raise DimensionMismatch(f"dictionaries disagree on P: {dict_u.n_joints} vs {dict_v.n_joints}")
    if codes is None:
        return
    if codes.c_u.shape[0] != dict_u.k:
        raise DimensionMismatch(f"c_u has length {codes.c_u.shape[0]}, dictionary has {dict_u.k} atoms")
    k_v = dict_v.k if dict_v is not None else codes.c_v.shape[0]
    if codes.c_v.shape[0] != k_v:
        raise DimensionMismatch(f"c_v has length {codes.c_v.shape[0]}, dictionary has {k_v} atoms")


def combine(dict_u: PoseDictionary, dict_v: PoseDictionary, codes: Codes) -> Pose3D:
    """Shape decomposition: ``Y = sum_j c_u[j] B_u[j] + sum_j c_v[j] B_v[j]``."""
    check_pair(dict_u, dict_v, codes)
    y = np.tensordot(codes.c_u, dict_u.atoms, axes=1) + np.tensordot(codes.c_v, dict_v.atoms, axes=1)
    return Pose3D(y)
