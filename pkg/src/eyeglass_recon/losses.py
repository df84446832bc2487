"""Reconstruction objectives with analytic gradients.

Image-space terms act on rendered pixels and are pulled back to vertices by
the soft renderer; keypoint terms act on projected keypoints; the rest act
on vertices directly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np
import scipy.sparse as sp

from .camera import Camera, project, project_jacobian
from .mesh import AdjacencyTable
from .render import render_soft, render_soft_backward, DEFAULT_GAMMA, FRAME_COLOR, WHITE

TERMS = ("sym", "img", "sil", "kp", "sm", "avg")


@dataclass
class LossWeights:
    """Term weights. ``kp`` is lowered from 1.0 so that noisy keypoints do
    not override the image evidence (image terms are per-pixel means)."""

    sym: float = 0.1
    img: float = 5e-5
    sil: float = 5e-5
    kp: float = 0.01
    sm: float = 0.012
    avg: float = 2.1e-4

    def __post_init__(self):
        for k in TERMS:
            val = float(getattr(self, k))
            if not np.isfinite(val) or val < 0.0:
                raise ValueError(f"loss weight {k} must be finite and >= 0")
            setattr(self, k, val)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        unknown = set(d) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown loss weights {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "LossWeights":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, **overrides) -> "LossWeights":
        d = self.to_dict()
        d.update(overrides)
        return LossWeights.from_dict(d)


@dataclass
class LossReport:
    terms: dict
    weights: LossWeights
    total: float
    grad: np.ndarray | None = field(default=None, repr=False)

    def weighted(self) -> dict:
        return {k: getattr(self.weights, k) * self.terms[k] for k in TERMS}

    def summary(self) -> dict:
        return {"total": self.total, **{k: float(v) for k, v in self.terms.items()}}


def sym_plane(keypoints3d) -> float:
    """Half the mean x coordinate of the keypoints."""
    kp = np.asarray(keypoints3d, dtype=np.float64)
    return float(np.mean(kp[:, 0]) / 2.0)


def loss_sym(keypoints3d, pairs, mode: str = "mirror"):
    """Left/right symmetry of keypoint pairs.

    ``pairs`` holds (left, right) row positions into ``keypoints3d``. The y
    and z terms compare the heights and depths of each pair. For x:

    * ``"literal"``: (|x_l| + |x_r| - 2 sigma)^2 with sigma from
      :func:`sym_plane`; |x| has subgradient 0 at 0.
    * ``"mirror"`` (default): (x_l + x_r - 2 c)^2 where c = 2 sigma is the
      mean keypoint x, i.e. pairs should straddle the plane x = c.

    Returns ``(value, grad)`` with grad shaped like ``keypoints3d``.
    """
    kp = np.asarray(keypoints3d, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64)
    n = len(kp)
    l, r = pairs[:, 0], pairs[:, 1]
    xl, xr = kp[l, 0], kp[r, 0]
    sigma = sym_plane(kp)
    grad = np.zeros_like(kp)
    if mode == "literal":
        ex = np.abs(xl) + np.abs(xr) - 2.0 * sigma
        np.add.at(grad[:, 0], l, 2.0 * ex * np.sign(xl))
        np.add.at(grad[:, 0], r, 2.0 * ex * np.sign(xr))
        grad[:, 0] += np.sum(2.0 * ex) * (-2.0) / (2.0 * n)
    elif mode == "mirror":
        ex = xl + xr - 4.0 * sigma
        np.add.at(grad[:, 0], l, 2.0 * ex)
        np.add.at(grad[:, 0], r, 2.0 * ex)
        grad[:, 0] += np.sum(2.0 * ex) * (-4.0) / (2.0 * n)
    else:
        raise ValueError(f"unknown symmetry mode {mode!r}")
    dyz = kp[l, 1:] - kp[r, 1:]
    np.add.at(grad[:, 1:], l, 2.0 * dyz)
    np.add.at(grad[:, 1:], r, -2.0 * dyz)
    value = float(np.sum(ex ** 2) + np.sum(dyz ** 2))
    return value, grad


def _check_same(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")


def loss_img(rendered, target):
    """Squared per-pixel difference summed over channels, averaged over pixels."""
    a = np.asarray(rendered, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    _check_same(a, b)
    npix = a.shape[0] * a.shape[1]
    diff = a - b
    return float(np.sum(diff * diff) / npix), 2.0 * diff / npix


def loss_sil(rendered, target):
    """1 - soft IoU of two silhouettes with values in [0, 1]."""
    a = np.asarray(rendered, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    _check_same(a, b)
    inter = float(np.sum(a * b))
    union = float(np.sum(a) + np.sum(b) - inter)
    if union <= 0.0:
        return 0.0, np.zeros_like(a)
    diou = (b * union - inter * (1.0 - b)) / union ** 2
    return 1.0 - inter / union, -diou


def loss_kp(projected, observed, weights=None):
    """Mean squared distance between projected and observed keypoints."""
    p = np.asarray(projected, dtype=np.float64)
    o = np.asarray(observed, dtype=np.float64)
    if p.shape != o.shape:
        raise ValueError(f"keypoint count mismatch {p.shape} vs {o.shape}")
    w = np.ones(len(p)) if weights is None else np.asarray(weights, dtype=np.float64)
    r = p - o
    n = len(p)
    return float(np.sum(w * np.sum(r * r, axis=1)) / n), 2.0 * w[:, None] * r / n


def laplacian_matrix(adjacency: AdjacencyTable) -> sp.csr_matrix:
    """Uniform Laplacian I - D^-1 A; rows of isolated vertices are zero."""
    n = len(adjacency)
    rows, cols = adjacency.edges()
    val = adjacency.valence.astype(np.float64)
    inv = np.divide(1.0, val, out=np.zeros(n), where=val > 0)
    A = sp.csr_matrix((inv[rows], (rows, cols)), shape=(n, n))
    diag = sp.diags((val > 0).astype(np.float64))
    return (diag - A).tocsr()


def loss_smooth(vertices, adjacency):
    """Mean squared Laplacian residual (valence-normalized neighbour mean).

    ``adjacency`` may be an :class:`AdjacencyTable` or a precomputed
    :func:`laplacian_matrix`.
    """
    v = np.asarray(vertices, dtype=np.float64)
    L = laplacian_matrix(adjacency) if isinstance(adjacency, AdjacencyTable) else adjacency
    if L.shape[0] != len(v):
        raise ValueError("adjacency does not match the vertex count")
    res = L @ v
    n = len(v)
    return float(np.sum(res * res) / n), 2.0 * (L.T @ res) / n


def loss_avg(deformed, template):
    """Mean squared vertex displacement from the template."""
    a = np.asarray(deformed, dtype=np.float64)
    b = np.asarray(template, dtype=np.float64)
    _check_same(a, b)
    d = a - b
    n = len(a)
    return float(np.sum(d * d) / n), 2.0 * d / n


@dataclass
class LossContext:
    """Everything fixed during one reconstruction."""

    rest_vertices: np.ndarray
    faces: np.ndarray
    laplacian: sp.csr_matrix
    keypoint_indices: np.ndarray
    sym_pairs: np.ndarray           # positions into keypoint_indices
    camera: Camera
    target_image: np.ndarray        # (H, W, 3)
    target_silhouette: np.ndarray   # (H, W)
    observed: np.ndarray            # (42, 2)
    observed_weights: np.ndarray
    color: tuple = FRAME_COLOR
    bg: tuple = WHITE
    sym_mode: str = "mirror"
    # 3D terms (sym, sm, avg) see vertices divided by this length
    length_scale: float = 1.0


def total_loss(ctx: LossContext, vertices, weights: LossWeights,
               gamma: float = DEFAULT_GAMMA, need_grad: bool = True) -> LossReport:
    """Weighted objective and its vertex gradient."""
    V = np.asarray(vertices, dtype=np.float64)
    idx = ctx.keypoint_indices
    s = 1.0 / ctx.length_scale
    terms = {}

    kp3 = V[idx]
    terms["sym"], g_sym = loss_sym(kp3 * s, ctx.sym_pairs, ctx.sym_mode)
    uv, _, vis = project(ctx.camera, kp3)
    terms["kp"], g_uv = loss_kp(uv, ctx.observed, ctx.observed_weights * vis)
    terms["sm"], g_sm = loss_smooth(V * s, ctx.laplacian)
    terms["avg"], g_avg = loss_avg(V * s, ctx.rest_vertices * s)

    render = render_soft(ctx.camera, V, ctx.faces, ctx.color, ctx.bg, gamma)
    terms["img"], g_img = loss_img(render.color, ctx.target_image)
    terms["sil"], g_sil = loss_sil(render.silhouette, ctx.target_silhouette)

    w = weights
    total = (w.sym * terms["sym"]
             + (w.img * terms["img"] + w.sil * terms["sil"] + w.kp * terms["kp"])
             + (w.sm * terms["sm"] + w.avg * terms["avg"]))
    report = LossReport({k: float(terms[k]) for k in TERMS}, w, float(total))
    if not need_grad:
        return report

    G = (w.sm * g_sm + w.avg * g_avg) * s
    g_kp3 = w.sym * g_sym * s
    if w.kp:
        J = project_jacobian(ctx.camera, kp3)
        g_kp3 = g_kp3 + np.einsum("ni,nij->nj", w.kp * g_uv, J)
    np.add.at(G, idx, g_kp3)
    if w.img or w.sil:
        G += render_soft_backward(render, grad_silhouette=w.sil * g_sil,
                                  grad_color=w.img * g_img)
    report.grad = G
    return report
