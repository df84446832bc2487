"""Hard (z-buffer) and soft (differentiable) rasterization of flat-colored meshes.

The soft renderer computes, for every pixel centre ``p``,

    alpha(p) = 1 - prod_f (1 - sigmoid(d_f(p) / gamma))

where ``d_f(p)`` is the signed 2D distance (in pixels, positive inside) from
``p`` to the boundary of projected face ``f``. The color image is
``alpha * color + (1 - alpha) * bg``. Aggregation is carried in log space,
which keeps the backward pass exact even where faces saturate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _raster
from .camera import Camera, project, project_jacobian
from .mesh import Mesh

# faces further than SOFT_CUTOFF * gamma outside a pixel are skipped;
# sigmoid(-SOFT_CUTOFF) < 1e-6
SOFT_CUTOFF = 14.0
DEFAULT_GAMMA = 1.5
WHITE = (1.0, 1.0, 1.0)
FRAME_COLOR = (0.15, 0.12, 0.1)


@dataclass
class RenderedImage:
    """Image with values in [0, 1]; (H, W) silhouette or (H, W, 3) color."""

    pixels: np.ndarray

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]


@dataclass
class SoftRender:
    """Forward result of :func:`render_soft` plus what the backward pass needs."""

    silhouette: np.ndarray
    color: np.ndarray
    log_transmittance: np.ndarray
    screen: np.ndarray
    visible: np.ndarray
    jacobian: np.ndarray
    faces: np.ndarray
    gamma: float
    rgb: np.ndarray
    bg: np.ndarray


def _screen(camera: Camera, vertices):
    uv, depth, visible = project(camera, vertices)
    screen = uv * np.array([camera.width, camera.height], dtype=np.float64)
    return screen, depth, visible


def render_hard(camera: Camera, mesh: Mesh, color=FRAME_COLOR, bg=WHITE,
                silhouette: bool = False) -> RenderedImage:
    """Binary-coverage, z-buffered flat-color render (or {0, 1} mask)."""
    W, H = camera.width, camera.height
    if mesh.n_faces == 0:
        mask = np.zeros((H, W), dtype=np.uint8)
    else:
        screen, depth, visible = _screen(camera, mesh.vertices)
        invz = np.where(visible, 1.0 / np.where(visible, depth, 1.0), 0.0)
        mask, _ = _raster.hard_raster(np.ascontiguousarray(screen[:, 0]),
                                      np.ascontiguousarray(screen[:, 1]),
                                      invz, visible, mesh.faces, W, H)
    if silhouette:
        return RenderedImage(mask.astype(np.float64))
    m = mask.astype(np.float64)[..., None]
    img = m * np.asarray(color, dtype=np.float64) + (1.0 - m) * np.asarray(bg, dtype=np.float64)
    return RenderedImage(img)


def render_soft(camera: Camera, vertices, faces, color=FRAME_COLOR, bg=WHITE,
                gamma: float = DEFAULT_GAMMA) -> SoftRender:
    """Soft silhouette and flat-color image; keep the result for backward."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    W, H = camera.width, camera.height
    screen, depth, visible = _screen(camera, vertices)
    if len(faces):
        logt = _raster.soft_forward(np.ascontiguousarray(screen[:, 0]),
                                    np.ascontiguousarray(screen[:, 1]),
                                    visible, faces, W, H, float(gamma), SOFT_CUTOFF)
    else:
        logt = np.zeros((H, W))
    alpha = -np.expm1(logt)
    rgb = np.asarray(color, dtype=np.float64)
    bgc = np.asarray(bg, dtype=np.float64)
    img = alpha[..., None] * rgb + (1.0 - alpha[..., None]) * bgc
    jac = project_jacobian(camera, vertices)
    jac[~visible] = 0.0
    return SoftRender(alpha, img, logt, screen, visible, jac, faces, float(gamma), rgb, bgc)


def render_soft_backward(ctx: SoftRender, grad_silhouette=None, grad_color=None) -> np.ndarray:
    """Vertex gradient (n_v, 3) of sum(grad_sil * sil) + sum(grad_color * color)."""
    if ctx is None:
        raise ValueError("missing forward context")
    H, W = ctx.silhouette.shape
    g_alpha = np.zeros((H, W))
    if grad_silhouette is not None:
        g_alpha += np.asarray(grad_silhouette, dtype=np.float64).reshape(H, W)
    if grad_color is not None:
        g_alpha += np.asarray(grad_color, dtype=np.float64).reshape(H, W, -1) @ (ctx.rgb - ctx.bg)
    n = len(ctx.screen)
    if not np.any(g_alpha) or len(ctx.faces) == 0:
        return np.zeros((n, 3))
    gx, gy = _raster.soft_backward(np.ascontiguousarray(ctx.screen[:, 0]),
                                   np.ascontiguousarray(ctx.screen[:, 1]),
                                   ctx.visible, ctx.faces, W, H, ctx.gamma, SOFT_CUTOFF,
                                   ctx.log_transmittance, g_alpha)
    g_uv = np.column_stack([gx * W, gy * H])
    return np.einsum("ni,nij->nj", g_uv, ctx.jacobian)


def silhouette_from_image(image, bg=WHITE, threshold: float = 0.5) -> np.ndarray:
    """Foreground mask: pixels whose RGB distance to ``bg`` exceeds ``threshold``."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return (np.abs(img - np.mean(bg)) > threshold).astype(np.float64)
    dist = np.linalg.norm(img - np.asarray(bg, dtype=np.float64), axis=-1)
    return (dist > threshold).astype(np.float64)


# ---------------------------------------------------------------------------
# portable pixmaps

def write_ppm(path, image) -> None:
    """8-bit P6 (H, W, 3) or P5 (H, W) from values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    magic = b"P6" if img.ndim == 3 else b"P5"
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def write_pgm16(path, image) -> None:
    """16-bit big-endian P5 from a single-channel image in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("16-bit output is single channel")
    data = np.clip(np.rint(img * 65535.0), 0, 65535).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n65535\n" % (w, h))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read P5/P6 (8 or 16 bit) into floats in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported pixmap type {magic!r}")
    ch = 3 if magic == b"P6" else 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = w * h * ch
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).astype(np.float64) / maxval
    return data.reshape((h, w, 3) if ch == 3 else (h, w))
