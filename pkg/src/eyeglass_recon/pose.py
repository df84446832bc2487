"""Camera pose from 2D-3D keypoint correspondences by reprojection error."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .camera import Camera, orbit_camera, project, project_pose_jacobian
from .optim import Adam
from .synth import N_KEYPOINTS

log = logging.getLogger(__name__)


@dataclass
class Keypoints2D:
    """42 keypoints in normalized [0, 1]^2 image coordinates."""

    points: np.ndarray
    visible: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) != N_KEYPOINTS:
            raise ValueError(f"expected {N_KEYPOINTS} keypoints, got {len(self.points)}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("keypoint coordinates must be finite")
        if self.visible is not None:
            self.visible = np.asarray(self.visible, dtype=bool).reshape(N_KEYPOINTS)

    @property
    def weights(self) -> np.ndarray:
        if self.visible is None:
            return np.ones(N_KEYPOINTS)
        return self.visible.astype(np.float64)


def as_keypoints(kp) -> Keypoints2D:
    return kp if isinstance(kp, Keypoints2D) else Keypoints2D(kp)


@dataclass
class PoseConfig:
    learning_rate: float = 1e-3
    max_iters: int = 2000
    patience: int = 50
    min_improvement: float = 1e-12
    start_angles: tuple = (-20.0, 0.0, 20.0)
    polish: bool = True


@dataclass
class PoseEstimate:
    camera: Camera
    final_reproj_error: float
    iterations: int
    converged: bool
    start_losses: list = field(default_factory=list)
    best_so_far: list = field(default_factory=list)


def proj_keypoints(camera: Camera, template, deformed_vertices=None) -> Keypoints2D:
    """Project the template's keypoint vertices (or their deformed positions)."""
    idx = list(template.keypoints.indices)
    if deformed_vertices is None:
        pts = template.mesh.vertices[idx]
    else:
        dv = np.asarray(deformed_vertices, dtype=np.float64)
        if dv.shape != template.mesh.vertices.shape:
            raise ValueError("deformed vertices do not match the template topology")
        pts = dv[idx]
    uv, _, vis = project(camera, pts)
    return Keypoints2D(uv, vis)


def reproj_loss(camera: Camera, template, observed) -> float:
    """Sum of squared normalized-coordinate distances over visible keypoints."""
    observed = as_keypoints(observed)
    pred = proj_keypoints(camera, template)
    r = pred.points - observed.points
    return float(np.sum(observed.weights * np.sum(r * r, axis=1)))


def _loss_grad(camera: Camera, pts3d, obs, w):
    uv, _, vis = project(camera, pts3d)
    r = uv - obs
    ww = w * vis
    loss = float(np.sum(ww * np.sum(r * r, axis=1)))
    J = project_pose_jacobian(camera, pts3d)
    grad = 2.0 * np.einsum("n,ni,nij->j", ww, r, J)
    return loss, grad


def reproj_gradient(camera: Camera, template, observed) -> np.ndarray:
    """Gradient of :func:`reproj_loss` w.r.t. (position, rotation vector)."""
    observed = as_keypoints(observed)
    return _loss_grad(camera, template.keypoint_vertices, observed.points, observed.weights)[1]


def initial_distance(pts3d, obs, fov_deg) -> float:
    """Distance at which the 3D keypoint spread matches the observed 2D spread."""
    fv = 0.5 / math.tan(math.radians(fov_deg) / 2.0)
    s3 = np.sqrt(np.mean(np.sum((pts3d[:, :2] - pts3d[:, :2].mean(0)) ** 2, axis=1)))
    s2 = np.sqrt(np.mean(np.sum((obs - obs.mean(0)) ** 2, axis=1)))
    return fv * s3 / max(s2, 1e-9)


def _start_cameras(pts3d, obs, fov_deg, resolution, angles):
    d0 = initial_distance(pts3d, obs, fov_deg)
    target = pts3d.mean(axis=0)
    cu, cv = obs.mean(axis=0)
    cams = []
    for yaw in angles:
        for pitch in angles:
            cam = orbit_camera(target, d0, yaw, pitch, 0.0, fov_deg, resolution)
            fu, fv = cam.focal
            R = cam.R
            pos = cam.position - R[:, 0] * (cu - 0.5) * d0 / fu + R[:, 1] * (cv - 0.5) * d0 / fv
            cams.append(cam.with_pose(pos, cam.rotation))
    # frontal start first
    cams.sort(key=lambda c: float(np.linalg.norm(c.rotation)))
    return cams, d0


def _batch_rotations(r):
    """R and dR/dr_i for a batch of rotation vectors: (S, 3, 3), (S, 3, 3, 3)."""
    S = len(r)
    th2 = np.sum(r * r, axis=1)
    th = np.sqrt(th2)
    small = th < 1e-4
    ths = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(ths) / ths)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(ths)) / ths ** 2)
    da = np.where(small, -1.0 / 3.0 + th2 / 30.0,
                  (ths * np.cos(ths) - np.sin(ths)) / ths ** 3)
    db = np.where(small, -1.0 / 12.0 + th2 / 180.0,
                  (ths * np.sin(ths) - 2.0 * (1.0 - np.cos(ths))) / ths ** 4)
    K = np.zeros((S, 3, 3))
    K[:, 0, 1], K[:, 0, 2], K[:, 1, 2] = -r[:, 2], r[:, 1], -r[:, 0]
    K[:, 1, 0], K[:, 2, 0], K[:, 2, 1] = r[:, 2], -r[:, 1], r[:, 0]
    K2 = K @ K
    R = np.eye(3) + a[:, None, None] * K + b[:, None, None] * K2
    E = np.zeros((3, 3, 3))
    E[0, 1, 2], E[0, 2, 1] = -1.0, 1.0
    E[1, 0, 2], E[1, 2, 0] = 1.0, -1.0
    E[2, 0, 1], E[2, 1, 0] = -1.0, 1.0
    EK = np.einsum("ijk,skl->sijl", E, K) + np.einsum("skj,ijl->sikl", K, E)
    dR = (da[:, None] * r)[:, :, None, None] * K[:, None] \
        + a[:, None, None, None] * E[None] \
        + (db[:, None] * r)[:, :, None, None] * K2[:, None] \
        + b[:, None, None, None] * EK
    return R, dR


def _batch_loss_grad(pos, rot, pts3d, obs, w, fu, fv):
    """Reprojection losses (S,) and gradients (S, 6) for S camera poses."""
    R, dR = _batch_rotations(rot)
    q = pts3d[None, :, :] - pos[:, None, :]
    pc = np.einsum("spj,sjk->spk", q, R)
    depth = -pc[..., 2]
    vis = depth > 1e-6
    safe = np.where(vis, depth, 1.0)
    u = 0.5 + fu * pc[..., 0] / safe
    v = 0.5 - fv * pc[..., 1] / safe
    ru, rv = u - obs[None, :, 0], v - obs[None, :, 1]
    ww = w[None, :] * vis
    loss = np.sum(ww * (ru * ru + rv * rv), axis=1)
    gu, gv = 2.0 * ww * ru, 2.0 * ww * rv
    gpc = np.empty_like(pc)
    gpc[..., 0] = gu * fu / safe
    gpc[..., 1] = -gv * fv / safe
    gpc[..., 2] = (gu * fu * pc[..., 0] - gv * fv * pc[..., 1]) / safe ** 2
    g = np.empty((len(pos), 6))
    g[:, :3] = -np.einsum("spk,sjk->sj", gpc, R)
    M = np.einsum("spj,spk->sjk", q, gpc)
    g[:, 3:] = np.einsum("sjk,sijk->si", M, dR)
    return loss, g


def _adam_batch(cams, pts3d, obs, w, scale, cfg: PoseConfig):
    """Adam over all starts at once; position is optimized in units of ``scale``."""
    fu, fv = cams[0].focal
    theta = np.array([np.concatenate([c.position / scale, c.rotation]) for c in cams])
    S = len(cams)
    opt = Adam(lr=cfg.learning_rate)
    best_loss = np.full(S, math.inf)
    best_theta = theta.copy()
    window_ref = np.full(S, math.inf)
    active = np.ones(S, dtype=bool)
    it = 0
    for it in range(1, cfg.max_iters + 1):
        loss, g = _batch_loss_grad(theta[:, :3] * scale, theta[:, 3:], pts3d, obs, w, fu, fv)
        better = loss < best_loss
        best_loss = np.where(better, loss, best_loss)
        best_theta[better] = theta[better]
        if it % cfg.patience == 0:
            active &= (window_ref - best_loss) >= cfg.min_improvement
            window_ref = best_loss.copy()
            if not active.any():
                break
        g[:, :3] *= scale
        new = opt.step(theta, g)
        theta = np.where(active[:, None], new, theta)
        # keep rotation vectors in the canonical ball
        norms = np.linalg.norm(theta[:, 3:], axis=1)
        over = norms >= 0.99 * math.pi
        if over.any():
            theta[over, 3:] *= (0.99 * math.pi / norms[over])[:, None]
    return best_theta, best_loss, it


def _polish(cam: Camera, pts3d, obs, w):
    sw = np.sqrt(w)

    def resid(p):
        c = cam.with_pose(p[:3], p[3:])
        uv, _, _ = project(c, pts3d)
        return ((uv - obs) * sw[:, None]).ravel()

    def jac(p):
        c = cam.with_pose(p[:3], p[3:])
        J = project_pose_jacobian(c, pts3d) * sw[:, None, None]
        return J.reshape(-1, 6)

    p0 = np.concatenate([cam.position, cam.rotation])
    try:
        res = least_squares(resid, p0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15,
                            gtol=1e-15, max_nfev=200)
    except ValueError:
        return cam, False
    if np.linalg.norm(res.x[3:]) >= math.pi:
        return cam, False
    return cam.with_pose(res.x[:3], res.x[3:]), res.status > 0


def estimate_pose(template, observed, config: PoseConfig | None = None, fov_deg: float = 30.0,
                  resolution=(256, 256)) -> PoseEstimate:
    """Multi-start Adam on the reprojection error, best start polished by LM.

    Intrinsics are fixed; the six extrinsic parameters are optimized.
    """
    cfg = config or PoseConfig()
    observed = as_keypoints(observed)
    pts3d = template.keypoint_vertices
    obs, w = observed.points, observed.weights
    starts, d0 = _start_cameras(pts3d, obs, fov_deg, resolution, cfg.start_angles)
    thetas, losses, iters = _adam_batch(starts, pts3d, obs, w, d0, cfg)
    best = (math.inf, None, False)
    start_losses, best_so_far = [], []
    for cam0, theta, loss in zip(starts, thetas, losses):
        cam = cam0.with_pose(theta[:3] * d0, theta[3:])
        loss = float(loss)
        converged = iters < cfg.max_iters
        if cfg.polish:
            cam_p, ok = _polish(cam, pts3d, obs, w)
            loss_p = _loss_grad(cam_p, pts3d, obs, w)[0]
            if loss_p <= loss:
                cam, loss, converged = cam_p, loss_p, ok or converged
        start_losses.append(loss)
        if loss < best[0]:
            best = (loss, cam, converged)
        best_so_far.append(best[0])
    total_iters = iters
    loss, cam, converged = best
    log.info("pose: reprojection error %.3e after %d Adam iterations", loss, total_iters)
    return PoseEstimate(cam, float(loss), total_iters, bool(converged), start_losses, best_so_far)
