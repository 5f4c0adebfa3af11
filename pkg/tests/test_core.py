import numpy as np
import pytest

from sdmpose.core import (
    CameraMatrix, Codes, DictKind, Pose2D, Pose3D, PoseDictionary, center_pose, center_pose2d, combine,
)
from sdmpose.errors import DimensionMismatch, InvalidDictionary, InvalidPose

from conftest import random_atoms


def test_pose_shapes_are_checked():
    with pytest.raises(InvalidPose):
        Pose3D(np.zeros((2, 4)))
    with pytest.raises(InvalidPose):
        Pose2D(np.zeros((3, 4)))
    with pytest.raises(InvalidPose):
        Pose3D(np.zeros((3, 1)))
    with pytest.raises(InvalidPose):
        Pose3D(np.array([[0.0, np.nan], [0, 0], [0, 0]]))


def test_pose_is_read_only_copy():
    a = np.arange(6.0).reshape(3, 2)
    y = Pose3D(a)
    a[0, 0] = 99.0
    assert y.joints[0, 0] == 0.0
    with pytest.raises(ValueError):
        y.joints[0, 0] = 1.0


def test_center_pose_returns_offset(rng):
    a = rng.normal(size=(3, 7)) + np.array([[5.0], [-2.0], [1.0]])
    y, off = center_pose(Pose3D(a))
    assert y.centered
    np.testing.assert_allclose(off, a.mean(axis=1))
    np.testing.assert_allclose(y.joints + off[:, None], a)
    x, off2 = center_pose2d(Pose2D(a[:2]))
    assert x.centered
    np.testing.assert_allclose(off2, off[:2])


def test_dictionary_invariants(rng):
    atoms = random_atoms(rng, 4, 5)
    d = PoseDictionary(atoms, DictKind.DEFORMATION)
    assert (d.k, d.n_joints) == (4, 5)
    assert d.matrix().shape == (15, 4)
    np.testing.assert_array_equal(d.matrix()[:, 2], atoms[2].ravel())
    with pytest.raises(InvalidDictionary):
        PoseDictionary(atoms * 3.0)
    shifted = atoms.copy()
    shifted[0, 0] += 0.1
    with pytest.raises(InvalidDictionary):
        PoseDictionary(shifted)
    # slack of 1e-6 on the norm bound
    PoseDictionary(atoms * (1 + 5e-7))


def test_codes_and_camera_validation():
    with pytest.raises(DimensionMismatch):
        Codes(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        CameraMatrix(np.eye(3))
    assert CameraMatrix.from_scale_rotation(2.0, np.eye(3)).scale == pytest.approx(2.0)
    np.testing.assert_array_equal(CameraMatrix.identity().m, np.eye(2, 3))


def test_combine_matches_explicit_sum(rng):
    du = PoseDictionary(random_atoms(rng, 3, 6))
    dv = PoseDictionary(random_atoms(rng, 2, 6), DictKind.DEFORMATION)
    codes = Codes(np.array([1.0, -2.0, 0.5]), np.array([0.3, 4.0]))
    want = sum(c * a for c, a in zip(codes.c_u, du.atoms)) + sum(c * a for c, a in zip(codes.c_v, dv.atoms))
    np.testing.assert_allclose(combine(du, dv, codes).joints, want, atol=1e-14)
    with pytest.raises(DimensionMismatch):
        combine(du, dv, Codes(np.zeros(2), np.zeros(2)))
