"""Procedural skeleton datasets and 2D observation protocols.

Three hard-coded archetypes on a 16-joint skeleton stand in for motion
capture categories.  A family perturbs one archetype by moving groups of
joints along fixed directions with random amplitudes.  The y axis is
vertical; the orbit camera turns about it and projects orthographically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Pose2D, Pose3D, as_joints, center_pose

JOINT_NAMES = (
    "pelvis",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "spine", "thorax", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
)
N_JOINTS = len(JOINT_NAMES)
J = {name: i for i, name in enumerate(JOINT_NAMES)}

# Joint coordinates in millimetres, one (x, y, z) triple per joint in
# JOINT_NAMES order.  x points to the subject's left, z forward.
_STAND = [
    (0, 950, 0),
    (-100, 950, 0), (-100, 500, 10), (-100, 80, 0),
    (100, 950, 0), (100, 500, 10), (100, 80, 0),
    (0, 1200, 0), (0, 1450, 0), (0, 1650, 10),
    (180, 1420, 0), (200, 1150, -10), (210, 900, 10),
    (-180, 1420, 0), (-200, 1150, -10), (-210, 900, 10),
]
_STRIDE = [
    (0, 920, 0),
    (-100, 920, 0), (-100, 520, 170), (-100, 90, 240),
    (100, 920, 0), (100, 490, -90), (100, 110, -320),
    (0, 1170, 20), (0, 1420, 40), (0, 1620, 60),
    (180, 1390, 40), (200, 1140, 140), (210, 910, 260),
    (-180, 1390, 40), (-200, 1140, -100), (-210, 920, -230),
]
_SEATED = [
    (0, 480, 0),
    (-110, 480, 0), (-120, 500, 440), (-120, 70, 470),
    (110, 480, 0), (120, 500, 440), (120, 70, 470),
    (0, 730, -20), (0, 980, -30), (0, 1180, -10),
    (180, 950, -30), (210, 700, 20), (190, 620, 260),
    (-180, 950, -30), (-210, 700, 20), (-190, 620, 260),
]

ARCHETYPES = {
    "stand": np.array(_STAND, dtype=float).T,
    "stride": np.array(_STRIDE, dtype=float).T,
    "seated": np.array(_SEATED, dtype=float).T,
}


def archetype(name: str) -> Pose3D:
    try:
        return Pose3D(ARCHETYPES[name])
    except KeyError:
        raise KeyError(f"unknown archetype {name!r}; choose from {sorted(ARCHETYPES)}") from None


@dataclass(frozen=True)
class DeformAxis:
    """Move ``joints`` by ``amplitude * direction`` with amplitude ~ U(lo, hi) mm."""

    joints: tuple[int, ...]
    direction: tuple[float, float, float]
    amplitude: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.amplitude
        if lo < 0 or hi < lo:
            raise ValueError(f"amplitude range must satisfy 0 <= lo <= hi, got {self.amplitude}")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not np.all(np.isfinite(d)) or not np.any(d):
            raise ValueError("direction must be a non-zero 3-vector")


@dataclass(frozen=True)
class FamilySpec:
    name: str
    base: Pose3D
    deform_axes: tuple[DeformAxis, ...] = ()
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
        p = self.base.n_joints
        for ax in self.deform_axes:
            if any(j < 0 or j >= p for j in ax.joints):
                raise ValueError(f"joint index out of range for P={p}: {ax.joints}")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def _axis(joints: tuple[str, ...], direction, lo: float, hi: float) -> DeformAxis:
    return DeformAxis(tuple(J[j] for j in joints), tuple(float(v) for v in direction), (lo, hi))


RIGHT_LEG = ("r_knee", "r_ankle")
LEFT_LEG = ("l_knee", "l_ankle")
UPPER = ("spine", "thorax", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist")

# Deformation vocabulary shared by the families: limb swings, knee bends,
# torso lean and arm raises.  Directions are unit vectors in the body frame.
FAMILY_AXES: dict[str, tuple[DeformAxis, ...]] = {
    "stand": (
        _axis(("r_ankle",), (0, 0.3, -1), 0, 120),
        _axis(("l_ankle",), (0, 0.3, -1), 0, 120),
        _axis(("l_elbow", "l_wrist"), (0, 0.4, 1), 0, 150),
        _axis(("r_elbow", "r_wrist"), (0, 0.4, 1), 0, 150),
        _axis(("head", "thorax"), (0, 0, 1), 0, 60),
    ),
    "stride": (
        _axis(RIGHT_LEG, (0, 0.2, 1), 0, 150),
        _axis(LEFT_LEG, (0, 0.2, 1), 0, 150),
        _axis(("r_ankle",), (0, 0.5, -1), 0, 160),
        _axis(("l_ankle",), (0, 0.5, -1), 0, 160),
        _axis(("l_elbow", "l_wrist"), (0, 0.3, -1), 0, 200),
        _axis(("r_elbow", "r_wrist"), (0, 0.3, 1), 0, 200),
        _axis(UPPER, (0, 0, 1), 0, 80),
    ),
    "seated": (
        _axis(RIGHT_LEG, (0, 0.3, 1), 0, 100),
        _axis(LEFT_LEG, (0, 0.3, 1), 0, 100),
        _axis(("r_ankle",), (0, 0, -1), 0, 200),
        _axis(("l_ankle",), (0, 0, -1), 0, 200),
        _axis(("l_elbow", "l_wrist"), (0, 0.5, 1), 0, 150),
        _axis(("r_elbow", "r_wrist"), (0, 0.5, 1), 0, 150),
        _axis(UPPER, (0, -0.2, 1), 0, 120),
    ),
}


def jitter_axes(amplitude: float, n_joints: int = N_JOINTS) -> tuple[DeformAxis, ...]:
    """Independent per-joint displacements along each coordinate axis, each U(0, amplitude).

    These small local deformations sit on top of the limb-level axes and give
    a family full rank, so a deformation dictionary has something to learn.
    """
    if amplitude < 0:
        raise ValueError("jitter amplitude must be non-negative")
    if amplitude == 0:
        return ()
    return tuple(
        DeformAxis((j,), tuple(float(v) for v in e), (0.0, float(amplitude)))
        for j in range(n_joints)
        for e in np.eye(3)
    )


def family(name: str, count: int, seed: int = 0, scale: float = 1.0, jitter: float = 0.0) -> FamilySpec:
    """Built-in family for archetype ``name``.

    ``scale`` multiplies the limb-level amplitudes and ``jitter`` adds
    per-joint axes (see :func:`jitter_axes`).
    """
    if name not in FAMILY_AXES:
        raise KeyError(f"unknown family {name!r}; choose from {sorted(FAMILY_AXES)}")
    axes = tuple(
        DeformAxis(ax.joints, ax.direction, (ax.amplitude[0] * scale, ax.amplitude[1] * scale))
        for ax in FAMILY_AXES[name]
    )
    return FamilySpec(name=name, base=archetype(name), deform_axes=axes + jitter_axes(jitter),
                      count=count, seed=seed)


def generate_family(spec: FamilySpec) -> list[Pose3D]:
    """Draw ``spec.count`` centred poses from a family, deterministically per seed."""
    rng = np.random.default_rng(spec.seed)
    base = as_joints(spec.base, 3)
    units = [np.asarray(ax.direction, dtype=float) / np.linalg.norm(ax.direction) for ax in spec.deform_axes]
    poses = []
    for _ in range(spec.count):
        joints = base.copy()
        for ax, unit in zip(spec.deform_axes, units):
            amp = rng.uniform(*ax.amplitude)
            joints[:, list(ax.joints)] += amp * unit[:, None]
        poses.append(center_pose(Pose3D(joints))[0])
    return poses


def orbit_rotation(azimuth: float) -> np.ndarray:
    """Rotation about the vertical (y) axis."""
    c, s = np.cos(azimuth), np.sin(azimuth)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def orbit_project(y: Pose3D, n_views: int) -> list[Pose2D]:
    """Orthographic views from a camera circling the vertical axis.

    View ``j`` rotates the pose by ``2 pi j / n_views`` about y, drops depth
    and centres the result.
    """
    if n_views < 1:
        raise ValueError("n_views must be at least 1")
    joints = as_joints(y, 3)
    views = []
    for j in range(n_views):
        x = (orbit_rotation(2.0 * np.pi * j / n_views) @ joints)[:2]
        views.append(Pose2D(x - x.mean(axis=1, keepdims=True)))
    return views


def add_noise(x: Pose2D, spec: NoiseSpec) -> Pose2D:
    """Add i.i.d. N(0, sigma^2) to every 2D coordinate."""
    joints = as_joints(x, 2)
    if spec.sigma == 0:
        return x if isinstance(x, Pose2D) else Pose2D(joints)
    rng = np.random.default_rng(spec.seed)
    return Pose2D(joints + rng.normal(0.0, spec.sigma, size=joints.shape))
