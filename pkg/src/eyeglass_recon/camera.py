"""Pinhole camera with axis-angle extrinsics and analytic projection Jacobians.

Conventions: the rotation vector ``r`` gives the camera-to-world rotation
``R = exp([r]x)``; the camera looks down its local -z axis with +y up.
Image coordinates are normalized so that (0, 0) is the top-left corner and
(1, 1) the bottom-right corner of the image.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NEAR = 1e-6


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(r) -> np.ndarray:
    """Rotation matrix exp([r]x)."""
    r = np.asarray(r, dtype=np.float64)
    th = float(np.linalg.norm(r))
    K = skew(r)
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + (math.sin(th) / th) * K + ((1.0 - math.cos(th)) / th ** 2) * K @ K


def rodrigues_jacobian(r) -> np.ndarray:
    """dR/dr_i stacked as (3, 3, 3), index [i] is the derivative w.r.t. r_i."""
    r = np.asarray(r, dtype=np.float64)
    th2 = float(r @ r)
    E = np.eye(3)
    if th2 < 1e-12:
        K = skew(r)
        return np.stack([skew(E[i]) + 0.5 * (skew(E[i]) @ K + K @ skew(E[i])) for i in range(3)])
    R = rodrigues(r)
    K = skew(r)
    IR = np.eye(3) - R
    return np.stack([(r[i] * K + skew(np.cross(r, IR[:, i]))) @ R / th2 for i in range(3)])


def rotation_to_vector(R) -> np.ndarray:
    """Inverse of :func:`rodrigues` for rotation angles below pi."""
    R = np.asarray(R, dtype=np.float64)
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    th = math.acos(c)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-8:
        return 0.5 * w
    return th / (2.0 * math.sin(th)) * w


@dataclass(frozen=True, eq=False)
class Camera:
    """Camera position (mm), camera-to-world rotation vector, vertical fov."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    fov_deg: float = 30.0
    resolution: tuple = (256, 256)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "resolution", tuple(int(x) for x in self.resolution))
        if not np.all(np.isfinite(self.position)) or not np.all(np.isfinite(self.rotation)):
            raise ValueError("camera parameters must be finite")
        if np.linalg.norm(self.rotation) >= math.pi:
            raise ValueError("rotation vector magnitude must be < pi")
        if not 10.0 < self.fov_deg < 120.0:
            raise ValueError("fov_deg must lie in (10, 120)")
        if min(self.resolution) < 16:
            raise ValueError("resolution must be at least 16x16")

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    @property
    def R(self) -> np.ndarray:
        return rodrigues(self.rotation)

    @property
    def focal(self) -> tuple[float, float]:
        """Focal lengths in normalized units (u, v)."""
        fv = 0.5 / math.tan(math.radians(self.fov_deg) / 2.0)
        return fv * self.height / self.width, fv

    def with_pose(self, position, rotation) -> "Camera":
        return Camera(position, rotation, self.fov_deg, self.resolution)

    def with_resolution(self, resolution) -> "Camera":
        return Camera(self.position, self.rotation, self.fov_deg, resolution)

    def to_dict(self) -> dict:
        return {"position": [float(x) for x in self.position],
                "rotation": [float(x) for x in self.rotation],
                "fov_deg": float(self.fov_deg),
                "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d: dict, resolution=None) -> "Camera":
        res = resolution or d.get("resolution", (256, 256))
        return cls(d["position"], d["rotation"], d["fov_deg"], res)

    def to_camera_frame(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.position) @ self.R


def look_at_rotation(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Rotation vector of a camera at ``eye`` looking at ``target``."""
    eye, target, up = (np.asarray(a, dtype=np.float64) for a in (eye, target, up))
    back = eye - target
    back /= np.linalg.norm(back)
    right = np.cross(up, back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    return rotation_to_vector(np.column_stack([right, true_up, back]))


def orbit_camera(target, distance, yaw_deg, pitch_deg, roll_deg, fov_deg=30.0,
                 resolution=(256, 256)) -> Camera:
    """Camera on a sphere around ``target``, looking at it.

    Yaw rotates about world y, pitch about world x, roll about the camera's
    own viewing axis.
    """
    def axis_rot(axis, deg):
        v = np.zeros(3)
        v[axis] = math.radians(deg)
        return rodrigues(v)

    R = axis_rot(1, yaw_deg) @ axis_rot(0, pitch_deg) @ axis_rot(2, roll_deg)
    position = np.asarray(target, dtype=np.float64) + distance * R[:, 2]
    return Camera(position, rotation_to_vector(R), fov_deg, resolution)


def project(camera: Camera, points):
    """Project world points.

    Returns ``(uv, depth, visible)``: normalized image coordinates (n, 2),
    distance along the viewing axis (n,), and a flag that is False for points
    at or behind the camera plane.
    """
    pc = camera.to_camera_frame(np.atleast_2d(points))
    depth = -pc[:, 2]
    visible = depth > NEAR
    safe = np.where(visible, depth, 1.0)
    fu, fv = camera.focal
    uv = np.column_stack([0.5 + fu * pc[:, 0] / safe, 0.5 - fv * pc[:, 1] / safe])
    return uv, depth, visible


def project_jacobian(camera: Camera, points) -> np.ndarray:
    """d(u, v)/d(world point), shape (n, 2, 3)."""
    pc = camera.to_camera_frame(np.atleast_2d(points))
    return _dproj_dpc(camera, pc) @ camera.R.T


def _dproj_dpc(camera: Camera, pc) -> np.ndarray:
    fu, fv = camera.focal
    depth = -pc[:, 2]
    safe = np.where(depth > NEAR, depth, 1.0)
    J = np.zeros((len(pc), 2, 3))
    J[:, 0, 0] = fu / safe
    J[:, 0, 2] = fu * pc[:, 0] / safe ** 2
    J[:, 1, 1] = -fv / safe
    J[:, 1, 2] = -fv * pc[:, 1] / safe ** 2
    return J


def project_pose_jacobian(camera: Camera, points) -> np.ndarray:
    """d(u, v)/d(position, rotation), shape (n, 2, 6)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    q = pts - camera.position
    pc = q @ camera.R
    Jpc = _dproj_dpc(camera, pc)
    out = np.empty((len(pts), 2, 6))
    out[:, :, :3] = -Jpc @ camera.R.T
    dR = rodrigues_jacobian(camera.rotation)
    for i in range(3):
        dpc = q @ dR[i]           # (dR_i)^T q for each row
        out[:, :, 3 + i] = np.einsum("nij,nj->ni", Jpc, dpc)
    return out
