"""Online optimization: fit the FFD deformation of the template to one image."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .ffd import FfdLattice, backprop_delta, deform
from .losses import LossContext, LossWeights, laplacian_matrix, total_loss
from .mesh import Mesh, bbox_diagonal, vertex_adjacency
from .optim import Adam
from .pose import PoseConfig, PoseEstimate, as_keypoints, estimate_pose
from .render import WHITE, silhouette_from_image

log = logging.getLogger(__name__)


@dataclass
class OptimConfig:
    learning_rate: float = 1e-2
    # exponential decay target reached at the last iteration; None keeps lr fixed
    learning_rate_final: float | None = None
    max_iters: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    gamma_schedule: list | None = None
    convergence_tol: float = 1e-10
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.learning_rate_final is not None and not self.learning_rate_final > 0:
            raise ValueError("learning_rate_final must be > 0")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def schedule(self) -> list:
        """(start iteration, gamma) pairs sorted by iteration."""
        if self.gamma_schedule:
            return sorted((int(i), float(g)) for i, g in self.gamma_schedule)
        # the soft mask's 0.5 level sits well outside the hard edge unless
        # gamma is a small fraction of a pixel, so the last stage is sharp
        n = self.max_iters
        return [(0, 0.5), (int(0.1 * n), 0.25), (int(0.2 * n), 0.1)]

    def lr_at(self, it: int) -> float:
        if self.learning_rate_final is None or self.max_iters == 1:
            return self.learning_rate
        frac = it / (self.max_iters - 1)
        return self.learning_rate * (self.learning_rate_final / self.learning_rate) ** frac

    def gamma_at(self, it: int) -> float:
        g = None
        for start, gamma in self.schedule():
            if it >= start:
                g = gamma
        return g if g is not None else self.schedule()[0][1]


@dataclass
class ReconstructionResult:
    mesh: Mesh
    delta: np.ndarray
    loss_history: list
    pose: PoseEstimate
    delta_scale: float = 1.0
    final_report: dict = field(default_factory=dict)


def frame_color(image, keypoints, bg=WHITE) -> np.ndarray:
    """Median color of foreground pixels under the keypoints (all foreground as fallback)."""
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape[:2]
    mask = silhouette_from_image(img, bg) > 0
    kp = np.asarray(keypoints, dtype=np.float64)
    j = np.clip((kp[:, 0] * W).astype(int), 0, W - 1)
    i = np.clip((kp[:, 1] * H).astype(int), 0, H - 1)
    hits = mask[i, j]
    if hits.any():
        return np.median(img[i[hits], j[hits]], axis=0)
    if mask.any():
        return np.median(img[mask], axis=0)
    return np.zeros(3)


def reconstruct(image, observed_kp, template, lattice: FfdLattice,
                weights: LossWeights | None = None, config: OptimConfig | None = None,
                fov_deg: float = 30.0, pose: PoseEstimate | None = None,
                pose_config: PoseConfig | None = None, bg=WHITE,
                sym_mode: str = "mirror", callback=None) -> ReconstructionResult:
    """Deform ``template`` so its render matches ``image`` and ``observed_kp``.

    The camera is estimated once from the keypoints (unless ``pose`` is
    given) and then held fixed. The deformation field is optimized in units
    of the template's bounding-box diagonal. ``callback``, if given, receives
    each per-iteration history record.
    """
    weights = weights or LossWeights()
    config = config or OptimConfig()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) color image")
    H, W = img.shape[:2]
    observed = as_keypoints(observed_kp)
    if pose is None:
        pose = estimate_pose(template, observed, pose_config, fov_deg, (W, H))
    camera: Camera = pose.camera.with_resolution((W, H))
    mesh = template.mesh
    if lattice.basis.shape[0] != mesh.n_vertices:
        raise ValueError("lattice was not built for this template")
    ctx = LossContext(
        rest_vertices=mesh.vertices,
        faces=mesh.faces,
        laplacian=laplacian_matrix(vertex_adjacency(mesh)),
        keypoint_indices=np.asarray(template.keypoints.indices, dtype=np.int64),
        sym_pairs=template.keypoints.pair_positions,
        camera=camera,
        target_image=img,
        target_silhouette=silhouette_from_image(img, bg),
        observed=observed.points,
        observed_weights=observed.weights,
        color=tuple(frame_color(img, observed.points, bg)),
        bg=tuple(bg),
        sym_mode=sym_mode,
        length_scale=bbox_diagonal(mesh),
    )
    scale = ctx.length_scale
    opt = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    delta = np.zeros((lattice.n_control, 3))
    last_switch = config.schedule()[-1][0]
    history = []
    best_all = math.inf
    stage_best, stage_delta, stage_gamma = math.inf, delta.copy(), None
    window_ref = math.inf
    for it in range(config.max_iters):
        gamma = config.gamma_at(it)
        if gamma != stage_gamma:
            stage_best, stage_gamma = math.inf, gamma
        V = deform(lattice, delta * scale)
        rep = total_loss(ctx, V, weights, gamma)
        best_all = min(best_all, rep.total)
        if rep.total < stage_best:
            stage_best, stage_delta = rep.total, delta.copy()
        history.append({"iter": it, "gamma": gamma, "best": best_all, **rep.summary()})
        if callback is not None:
            callback(history[-1])
        if it >= last_switch and (it - last_switch + 1) % config.patience == 0:
            if window_ref - stage_best < config.convergence_tol:
                log.info("converged at iteration %d", it)
                break
            window_ref = stage_best
        g = backprop_delta(lattice, rep.grad) * scale
        opt.lr = config.lr_at(it)
        delta = opt.step(delta, g)
        if not np.all(np.isfinite(delta)):
            raise FloatingPointError("deformation diverged")
    delta_mm = stage_delta * scale
    V = deform(lattice, delta_mm)
    final = total_loss(ctx, V, weights, stage_gamma, need_grad=False).summary()
    return ReconstructionResult(mesh.with_vertices(V), delta_mm, history, pose, scale, final)
