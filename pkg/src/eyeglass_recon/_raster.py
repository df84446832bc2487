"""Compiled rasterization kernels. Screen coordinates are in pixels with
pixel (i, j) centred at (j + 0.5, i + 0.5)."""
import math

import numba
import numpy as np

_EPS_AREA = 1e-12


@numba.njit(cache=True, inline="always")
def _seg_d2(px, py, ax, ay, bx, by):
    """Squared distance from p to segment ab and the clamped parameter t."""
    ex, ey = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    ll = ex * ex + ey * ey
    t = (wx * ex + wy * ey) / ll if ll > 0.0 else 0.0
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    nx, ny = wx - t * ex, wy - t * ey
    return nx * nx + ny * ny, t


@numba.njit(cache=True, inline="always")
def _inside(px, py, ax, ay, bx, by, cx, cy, area):
    if abs(area) <= _EPS_AREA:
        return False
    e0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    e1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    e2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    if area > 0.0:
        return e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0
    return e0 <= 0.0 and e1 <= 0.0 and e2 <= 0.0


@numba.njit(cache=True)
def _signed_dist(px, py, ax, ay, bx, by, cx, cy, grad):
    """Signed distance from p to triangle abc boundary (positive inside).

    ``grad`` receives d/d(ax, ay, bx, by, cx, cy).
    """
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    d2, t = _seg_d2(px, py, ax, ay, bx, by)
    k = 0
    q2, s = _seg_d2(px, py, bx, by, cx, cy)
    if q2 < d2:
        d2, t, k = q2, s, 1
    q2, s = _seg_d2(px, py, cx, cy, ax, ay)
    if q2 < d2:
        d2, t, k = q2, s, 2
    sign = 1.0 if _inside(px, py, ax, ay, bx, by, cx, cy, area) else -1.0
    d = math.sqrt(d2)
    for q in range(6):
        grad[q] = 0.0
    if d > 0.0:
        # edge k joins vertex k and vertex (k + 1) % 3
        i0 = 2 * k
        i1 = 2 * ((k + 1) % 3)
        if k == 0:
            ex, ey, ox, oy = bx - ax, by - ay, ax, ay
        elif k == 1:
            ex, ey, ox, oy = cx - bx, cy - by, bx, by
        else:
            ex, ey, ox, oy = ax - cx, ay - cy, cx, cy
        nx = (px - ox - t * ex) / d
        ny = (py - oy - t * ey) / d
        grad[i0] = -sign * (1.0 - t) * nx
        grad[i0 + 1] = -sign * (1.0 - t) * ny
        grad[i1] = -sign * t * nx
        grad[i1 + 1] = -sign * t * ny
    return sign * d


@numba.njit(cache=True)
def _dist_value(px, py, ax, ay, bx, by, cx, cy, area, m2):
    """Signed distance without gradient; returns -inf beyond the cutoff outside."""
    d2, _ = _seg_d2(px, py, ax, ay, bx, by)
    q2, _ = _seg_d2(px, py, bx, by, cx, cy)
    if q2 < d2:
        d2 = q2
    q2, _ = _seg_d2(px, py, cx, cy, ax, ay)
    if q2 < d2:
        d2 = q2
    if _inside(px, py, ax, ay, bx, by, cx, cy, area):
        return math.sqrt(d2)
    if d2 > m2:
        return -math.inf
    return -math.sqrt(d2)


@numba.njit(cache=True)
def signed_distance(px, py, tri):
    """Python-callable wrapper: returns (d, grad[6]) for one pixel/triangle."""
    grad = np.zeros(6)
    d = _signed_dist(px, py, tri[0, 0], tri[0, 1], tri[1, 0], tri[1, 1],
                     tri[2, 0], tri[2, 1], grad)
    return d, grad


@numba.njit(cache=True)
def _softplus(x):
    if x > 30.0:
        return x
    if x < -30.0:
        return math.exp(x)
    return math.log1p(math.exp(x))


@numba.njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@numba.njit(cache=True)
def soft_forward(sx, sy, ok, faces, width, height, gamma, cutoff):
    """Sum over faces of log(1 - sigmoid(d / gamma)) per pixel."""
    logt = np.zeros((height, width))
    margin = cutoff * gamma
    m2 = margin * margin
    for f in range(faces.shape[0]):
        a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
        if not (ok[a] and ok[b] and ok[c]):
            continue
        ax, ay, bx, by, cx, cy = sx[a], sy[a], sx[b], sy[b], sx[c], sy[c]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        x0 = max(int(math.floor(min(ax, bx, cx) - margin - 0.5)), 0)
        x1 = min(int(math.ceil(max(ax, bx, cx) + margin - 0.5)), width - 1)
        y0 = max(int(math.floor(min(ay, by, cy) - margin - 0.5)), 0)
        y1 = min(int(math.ceil(max(ay, by, cy) + margin - 0.5)), height - 1)
        for i in range(y0, y1 + 1):
            py = i + 0.5
            for j in range(x0, x1 + 1):
                d = _dist_value(j + 0.5, py, ax, ay, bx, by, cx, cy, area, m2)
                if d < -margin:
                    continue
                logt[i, j] -= _softplus(d / gamma)
    return logt


@numba.njit(cache=True)
def soft_backward(sx, sy, ok, faces, width, height, gamma, cutoff, logt, g_alpha):
    """Gradient of sum(g_alpha * alpha) w.r.t. screen coordinates."""
    n = sx.shape[0]
    gx = np.zeros(n)
    gy = np.zeros(n)
    grad = np.zeros(6)
    acc = np.zeros(6)
    margin = cutoff * gamma
    m2 = margin * margin
    for f in range(faces.shape[0]):
        a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
        if not (ok[a] and ok[b] and ok[c]):
            continue
        ax, ay, bx, by, cx, cy = sx[a], sy[a], sx[b], sy[b], sx[c], sy[c]
        x0 = max(int(math.floor(min(ax, bx, cx) - margin - 0.5)), 0)
        x1 = min(int(math.ceil(max(ax, bx, cx) + margin - 0.5)), width - 1)
        y0 = max(int(math.floor(min(ay, by, cy) - margin - 0.5)), 0)
        y1 = min(int(math.ceil(max(ay, by, cy) + margin - 0.5)), height - 1)
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        acc[:] = 0.0
        for i in range(y0, y1 + 1):
            py = i + 0.5
            for j in range(x0, x1 + 1):
                ga = g_alpha[i, j]
                if ga == 0.0:
                    continue
                px = j + 0.5
                if _dist_value(px, py, ax, ay, bx, by, cx, cy, area, m2) < -margin:
                    continue
                d = _signed_dist(px, py, ax, ay, bx, by, cx, cy, grad)
                w = ga * math.exp(logt[i, j]) * _sigmoid(d / gamma) / gamma
                for q in range(6):
                    acc[q] += w * grad[q]
        gx[a] += acc[0]
        gy[a] += acc[1]
        gx[b] += acc[2]
        gy[b] += acc[3]
        gx[c] += acc[4]
        gy[c] += acc[5]
    return gx, gy


@numba.njit(cache=True)
def hard_raster(sx, sy, invz, ok, faces, width, height):
    """Z-buffered coverage: returns (mask uint8, inverse-depth buffer)."""
    zbuf = np.zeros((height, width))
    mask = np.zeros((height, width), dtype=np.uint8)
    for f in range(faces.shape[0]):
        a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
        if not (ok[a] and ok[b] and ok[c]):
            continue
        ax, ay, bx, by, cx, cy = sx[a], sy[a], sx[b], sy[b], sx[c], sy[c]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if abs(area) <= _EPS_AREA:
            continue
        x0 = max(int(math.floor(min(ax, bx, cx) - 0.5)), 0)
        x1 = min(int(math.ceil(max(ax, bx, cx) - 0.5)), width - 1)
        y0 = max(int(math.floor(min(ay, by, cy) - 0.5)), 0)
        y1 = min(int(math.ceil(max(ay, by, cy) - 0.5)), height - 1)
        for i in range(y0, y1 + 1):
            py = i + 0.5
            for j in range(x0, x1 + 1):
                px = j + 0.5
                w0 = ((cx - bx) * (py - by) - (cy - by) * (px - bx)) / area
                w1 = ((ax - cx) * (py - cy) - (ay - cy) * (px - cx)) / area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                iz = w0 * invz[a] + w1 * invz[b] + w2 * invz[c]
                if iz > zbuf[i, j]:
                    zbuf[i, j] = iz
                    mask[i, j] = 1
    return mask, zbuf
