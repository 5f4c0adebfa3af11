import numpy as np
import pytest

from sdmpose.camera import project, rotation_about_axis, update_camera
from sdmpose.core import CameraMatrix, Pose2D, Pose3D
from sdmpose.errors import DegenerateGeometry, DimensionMismatch

from conftest import centered, random_rotation


def data_term(m, x, w):
    r = x - m @ w
    return 0.5 * float(np.sum(r * r))


def test_project_with_translation(rng):
    y = rng.normal(size=(3, 5))
    cam = CameraMatrix(2.0 * rotation_about_axis([0, 1, 0], 0.3)[:2])
    x = project(Pose3D(y), cam, t=[1.0, -1.0])
    np.testing.assert_allclose(x.joints, cam.m @ y + np.array([[1.0], [-1.0]]))
    with pytest.raises(DimensionMismatch):
        project(Pose3D(y), cam, t=[1.0, 2.0, 3.0])


def test_rotation_about_axis_is_a_rotation():
    r = rotation_about_axis([1, 2, 3], 0.7)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(r) == pytest.approx(1.0)
    np.testing.assert_allclose(r @ np.array([1, 2, 3]) / np.sqrt(14), np.array([1, 2, 3]) / np.sqrt(14))


@pytest.mark.parametrize("scale", [None, 1.0])
def test_exact_camera_is_recovered(rng, scale):
    for _ in range(10):
        w = centered(rng, 3, 12)
        s = 1.0 if scale else rng.uniform(0.5, 2.0)
        m = s * random_rotation(rng)[:2]
        cam = update_camera(Pose2D(m @ w), Pose3D(w), scale=scale)
        np.testing.assert_allclose(cam.m, m, atol=1e-7)


def test_fixed_scale_keeps_the_scale(rng):
    w, x = centered(rng, 3, 10), centered(rng, 2, 10)
    m = update_camera(Pose2D(x), Pose3D(w), scale=0.7).m
    np.testing.assert_allclose(m @ m.T, 0.49 * np.eye(2), atol=1e-12)


def _random_cameras(rng, n, scale):
    out = []
    for _ in range(n):
        q = random_rotation(rng)[:2]
        out.append((scale if scale is not None else rng.uniform(0.0, 3.0)) * q)
    return out


@pytest.mark.parametrize("scale", [None, 1.0])
def test_camera_beats_random_feasible_cameras(rng, scale):
    for _ in range(5):
        w, x = centered(rng, 3, 16), centered(rng, 2, 16)
        best = data_term(update_camera(Pose2D(x), Pose3D(w), scale=scale).m, x, w)
        assert all(best <= data_term(m, x, w) + 1e-9 for m in _random_cameras(rng, 200, scale))


def test_previous_camera_is_kept_on_ties(rng):
    # a planar pose seen head-on is symmetric under the in-plane flip
    w = centered(rng, 3, 8)
    w[2] = 0.0
    x = w[:2].copy()
    prev = CameraMatrix(np.eye(2, 3))
    assert np.allclose(update_camera(Pose2D(x), Pose3D(w), previous=prev).m, prev.m, atol=1e-8)


def test_degenerate_inputs(rng):
    with pytest.raises(DegenerateGeometry):
        update_camera(Pose2D(centered(rng, 2, 6)), Pose3D(np.zeros((3, 6))))
    with pytest.raises(DimensionMismatch):
        update_camera(Pose2D(centered(rng, 2, 6)), Pose3D(centered(rng, 3, 7)))
