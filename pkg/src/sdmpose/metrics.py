"""Pose error metrics: per-joint error and error after rigid alignment."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .core import Pose3D, as_joints
from .errors import DegenerateGeometry, DimensionMismatch, EmptyBatch

RANK_RTOL = 1e-12


def _pair(est, gt) -> tuple[np.ndarray, np.ndarray]:
    a = as_joints(est, 3)
    b = as_joints(gt, 3)
    if a.shape != b.shape:
        raise DimensionMismatch(f"poses have {a.shape[1]} and {b.shape[1]} joints")
    return a, b


def joint_distances(est: Pose3D, gt: Pose3D) -> np.ndarray:
    a, b = _pair(est, gt)
    return np.sqrt(np.sum((a - b) ** 2, axis=0))


def per_joint_error(est: Pose3D, gt: Pose3D) -> float:
    """Mean Euclidean distance between corresponding joints."""
    return float(np.mean(joint_distances(est, gt)))


def rigid_align(est: Pose3D, gt: Pose3D) -> tuple[Pose3D, np.ndarray, np.ndarray]:
    """Least-squares rotation and translation taking ``est`` onto ``gt``.

    No scaling is applied.  Returns ``(aligned, rotation, translation)`` with
    ``aligned = rotation @ est + translation``.
    """
    a, b = _pair(est, gt)
    mu_a = a.mean(axis=1)
    mu_b = b.mean(axis=1)
    cov = (b - mu_b[:, None]) @ (a - mu_a[:, None]).T
    U, s, Vt = np.linalg.svd(cov)
    if s[0] <= 0.0 or s[1] <= RANK_RTOL * s[0]:
        raise DegenerateGeometry("cross-covariance has rank below 2; rotation is not unique")
    d = np.sign(np.linalg.det(U @ Vt))
    if d == 0:
        d = 1.0
    rot = U @ np.diag([1.0, 1.0, d]) @ Vt
    trans = mu_b - rot @ mu_a
    aligned = rot @ a + trans[:, None]
    return Pose3D(aligned), rot, trans


def estimation_error(est: Pose3D, gt: Pose3D) -> float:
    """Per-joint error after rigid alignment of ``est`` onto ``gt``."""
    aligned, _, _ = rigid_align(est, gt)
    return per_joint_error(aligned, gt)


def joint_breakdown(pairs: Iterable[tuple[Pose3D, Pose3D]]) -> np.ndarray:
    """Mean aligned distance per joint over a batch of (estimate, truth) pairs."""
    rows = []
    for est, gt in pairs:
        aligned, _, _ = rigid_align(est, gt)
        if rows and len(rows[0]) != as_joints(gt, 3).shape[1]:
            raise DimensionMismatch("pairs disagree on the joint count")
        rows.append(joint_distances(aligned, gt))
    if not rows:
        raise EmptyBatch("joint_breakdown needs at least one pair")
    return np.mean(np.stack(rows), axis=0)
