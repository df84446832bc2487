import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from eyeglass_recon.camera import (Camera, look_at_rotation, orbit_camera, project,
                                   project_jacobian, project_pose_jacobian, rodrigues,
                                   rodrigues_jacobian, rotation_to_vector)

rotvecs = st.lists(st.floats(-1.7, 1.7), min_size=3, max_size=3).map(np.array).filter(
    lambda r: np.linalg.norm(r) < 3.0)


@settings(max_examples=60)
@given(rotvecs)
def test_rodrigues_matches_scipy(r):
    assert np.allclose(rodrigues(r), Rotation.from_rotvec(r).as_matrix(), atol=1e-12)
    assert np.allclose(rotation_to_vector(rodrigues(r)), r, atol=1e-7)


@pytest.mark.parametrize("r", [[0.3, -0.2, 0.5], [1e-9, 0.0, 2e-9], [0.0, 0.0, 0.0], [2.0, 1.0, -0.5]])
def test_rodrigues_jacobian_fd(r):
    r = np.array(r, dtype=float)
    J = rodrigues_jacobian(r)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (rodrigues(r + e) - rodrigues(r - e)) / (2 * h)
        assert np.allclose(J[i], fd, atol=1e-8)


def test_principal_point_and_focal():
    cam = Camera([0, 0, 100], [0, 0, 0], fov_deg=60, resolution=(200, 100))
    uv, depth, vis = project(cam, [[0, 0, 0], [10, 5, 0]])
    fv = 0.5 / math.tan(math.radians(30))
    assert np.allclose(uv[0], [0.5, 0.5])
    assert np.allclose(uv[1], [0.5 + fv * 0.5 * 10 / 100, 0.5 - fv * 5 / 100])
    assert np.allclose(depth, 100) and vis.all()


def test_behind_camera_is_invisible():
    cam = Camera([0, 0, 100])
    _, depth, vis = project(cam, [[0, 0, 150], [0, 0, 100]])
    assert not vis.any() and depth[0] == -50


def _fd(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def test_projection_jacobians_fd(rng):
    cam = orbit_camera([1, 2, -3], 250, 17, -9, 6, 35, (320, 240))
    pts = rng.normal(scale=30, size=(6, 3))
    J = project_jacobian(cam, pts)
    for k, p in enumerate(pts):
        fd = _fd(lambda q: project(cam, q[None])[0][0], p)
        assert np.allclose(J[k], fd, atol=1e-9)
    Jp = project_pose_jacobian(cam, pts)
    x0 = np.concatenate([cam.position, cam.rotation])
    fd = _fd(lambda x: project(cam.with_pose(x[:3], x[3:]), pts)[0], x0)
    assert np.allclose(Jp, fd, atol=1e-8)


@pytest.mark.parametrize("yaw,pitch,roll", [(0, 0, 0), (30, -30, 13), (-25, 10, -15)])
def test_orbit_camera_looks_at_target(yaw, pitch, roll):
    target = np.array([3.0, -4.0, -70.0])
    cam = orbit_camera(target, 400, yaw, pitch, roll)
    uv, depth, _ = project(cam, target[None])
    assert np.allclose(uv, 0.5, atol=1e-12)
    assert depth[0] == pytest.approx(400)
    assert np.linalg.norm(cam.position - target) == pytest.approx(400)


def test_orbit_roll_rotates_image_about_centre():
    t = np.zeros(3)
    a = orbit_camera(t, 300, 0, 0, 0)
    b = orbit_camera(t, 300, 0, 0, 90)
    uv_a = project(a, [[20.0, 0, 0]])[0][0] - 0.5
    uv_b = project(b, [[20.0, 0, 0]])[0][0] - 0.5
    assert np.allclose(np.abs(uv_b[::-1]), np.abs(uv_a), atol=1e-12)


def test_look_at_matches_orbit():
    cam = orbit_camera([0, 0, 0], 100, 20, 10, 0)
    r = look_at_rotation(cam.position, [0, 0, 0])
    assert np.allclose(rodrigues(r), cam.R, atol=1e-12)


def test_camera_validation_and_dict():
    cam = Camera([1, 2, 3], [0.1, 0.2, 0.3], 40, (64, 32))
    again = Camera.from_dict(cam.to_dict())
    assert np.array_equal(again.position, cam.position) and again.resolution == (64, 32)
    for bad in [dict(fov_deg=5), dict(fov_deg=130), dict(resolution=(8, 64)),
                dict(rotation=[4.0, 0, 0]), dict(position=[np.nan, 0, 0])]:
        kw = dict(position=[0, 0, 0])
        kw.update(bad)
        with pytest.raises(ValueError):
            Camera(**kw)
