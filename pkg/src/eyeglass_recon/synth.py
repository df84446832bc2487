"""Procedural full-frame eyeglasses with a fixed, shared topology.

Every frame is built from the same sweeps with the same sample counts, so
vertex ``i`` means the same landmark on every generated frame:

* two lens rims, rectangular cross-section, hard edged (4 strips x 2 verts
  per ring), ``RIM_SAMPLES`` rings each;
* a hard-edged bridge of ``BRIDGE_RINGS`` rings, open at both ends;
* two smooth temples of ``TEMPLE_RINGS`` rings, capped at both ends.

That gives 13768 vertices and 15664 faces.

Coordinates (millimetres): x across the frame (left lens at +x), y up,
z towards the viewer. The front face of the rims lies in z = 0 and the
temples run towards -z. The left half is built first; the right half is
its mirror image with identical vertex ordering, so the whole frame is
symmetric about x = 0 before the temples are tilted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np

from .mesh import Mesh

RIM_SAMPLES = 720
BRIDGE_RINGS = 42
TEMPLE_RINGS = 239
N_KEYPOINTS = 42

STYLES = ("rectangle", "octagon", "circle")

# attachment points on the outline, as sample offsets from the horizontal
_HINGE_OFFSET = 40      # above the temporal extreme
_BRIDGE_OFFSET = 50     # above the nasal extreme
_OCTAGON_ROUNDING = 2.0
_MIN_ROUNDING = 1.0


@dataclass(frozen=True)
class FrameParams:
    """Generative parameters of one frame (lengths in mm, angle in degrees).

    ``corner`` is the corner radius (rectangle) or chamfer (octagon) as a
    fraction of half the smaller lens dimension; circles ignore it.
    """

    style: str = "rectangle"
    lens_width: float = 50.0
    lens_height: float = 38.0
    bridge_width: float = 18.0
    temple_length: float = 140.0
    rim_thickness: float = 4.0
    rim_depth: float = 3.0
    pantoscopic_angle: float = 0.0
    corner: float = 0.35

    def validate(self) -> None:
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}; expected one of {STYLES}")
        for name in ("lens_width", "lens_height", "bridge_width", "temple_length",
                     "rim_thickness", "rim_depth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.rim_thickness > 5.0:
            raise ValueError("rim_thickness must be <= 5 mm")
        if not 0.0 <= self.pantoscopic_angle <= 20.0:
            raise ValueError("pantoscopic_angle must lie in [0, 20] degrees")
        if not 0.0 <= self.corner <= 1.0:
            raise ValueError("corner must lie in [0, 1]")
        if self.rim_thickness >= self.bridge_width:
            raise ValueError("rim_thickness must be smaller than bridge_width")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class KeypointSpec:
    """Vertex indices of the 42 keypoints of the shared topology."""

    indices: tuple
    front_indices: tuple
    temple_indices: tuple
    sym_pairs: tuple

    def __post_init__(self):
        if len(self.indices) != N_KEYPOINTS or len(set(self.indices)) != N_KEYPOINTS:
            raise ValueError("need 42 distinct keypoint indices")
        if len(self.front_indices) + len(self.temple_indices) != N_KEYPOINTS:
            raise ValueError("front/temple partition must cover all keypoints")
        if set(self.front_indices) | set(self.temple_indices) != set(self.indices):
            raise ValueError("front/temple partition must match indices")
        if len(self.sym_pairs) != N_KEYPOINTS // 2:
            raise ValueError("need 21 symmetric pairs")

    @property
    def pair_positions(self) -> np.ndarray:
        """(21, 2) positions of each pair inside ``indices``."""
        where = {v: k for k, v in enumerate(self.indices)}
        return np.array([[where[l], where[r]] for l, r in self.sym_pairs], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "indices": list(map(int, self.indices)),
            "front": list(map(int, self.front_indices)),
            "temple": list(map(int, self.temple_indices)),
            "sym_pairs": [[int(l), int(r)] for l, r in self.sym_pairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KeypointSpec":
        return cls(tuple(d["indices"]), tuple(d["front"]), tuple(d["temple"]),
                   tuple(tuple(p) for p in d["sym_pairs"]))


# ---------------------------------------------------------------------------
# lens outline: (core polygon) ⊕ (disk of radius rho), sampled per quadrant
# uniformly in arc length, starting at the temporal extreme (normal angle 0)
# and running counter-clockwise.

def _outline_pieces(params: FrameParams):
    """Quadrant pieces of the first quadrant, as (kind, data, length)."""
    w, h = params.lens_width / 2.0, params.lens_height / 2.0
    m = min(w, h)
    if params.style == "circle":
        rho, chamfer = m, 0.0
    elif params.style == "rectangle":
        rho, chamfer = max(params.corner * m, _MIN_ROUNDING), 0.0
    else:
        rho = min(_OCTAGON_ROUNDING, m)
        chamfer = params.corner * (m - rho)
    a, b = w - rho, h - rho
    chamfer = min(chamfer, a, b)
    # core octagon corners of the first quadrant
    p1 = np.array([a, b - chamfer])
    p2 = np.array([a - chamfer, b])
    s45 = math.sqrt(0.5)
    pieces = [
        ("seg", (np.array([a, 0.0]), p1, np.array([1.0, 0.0])), b - chamfer),
        ("arc", (p1, 0.0, math.pi / 4), rho * math.pi / 4),
        ("seg", (p1, p2, np.array([s45, s45])), chamfer * math.sqrt(2.0)),
        ("arc", (p2, math.pi / 4, math.pi / 2), rho * math.pi / 4),
        ("seg", (p2, np.array([0.0, b]), np.array([0.0, 1.0])), a - chamfer),
    ]
    return pieces, rho


def _quadrant_points(params: FrameParams, q: int):
    """First-quadrant points/normals at arc fractions k/q, k = 0..q."""
    pieces, rho = _outline_pieces(params)
    lengths = np.array([p[2] for p in pieces])
    total = lengths.sum()
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    pts = np.empty((q + 1, 2))
    nrm = np.empty((q + 1, 2))
    for k in range(q + 1):
        s = total * k / q
        idx = 0
        while idx < len(pieces) - 1 and (lengths[idx] <= 0.0 or s > cum[idx + 1]):
            idx += 1
        kind, data, length = pieces[idx]
        t = (s - cum[idx]) / length if length > 0 else 0.0
        if kind == "seg":
            p0, p1, n = data
            pts[k] = p0 + t * (p1 - p0) + rho * n
            nrm[k] = n
        else:
            c, th0, th1 = data
            th = th0 + t * (th1 - th0)
            n = np.array([math.cos(th), math.sin(th)])
            pts[k] = c + rho * n
            nrm[k] = n
    return pts, nrm


def lens_outline(params: FrameParams, n: int = RIM_SAMPLES):
    """Inner lens outline centred at the origin.

    Returns ``(points, normals)``, each (n, 2), counter-clockwise from the
    +x extreme. Sample ``k`` and sample ``n/2 - k`` (mod n) are x-mirrors.
    """
    if n % 4:
        raise ValueError("outline sample count must be a multiple of 4")
    q = n // 4
    p, nm = _quadrant_points(params, q)
    k = np.arange(q)
    fx = np.array([-1.0, 1.0])
    fy = np.array([1.0, -1.0])
    pts = np.concatenate([p[k], p[q - k] * fx, -p[k], p[q - k] * fy])
    nrm = np.concatenate([nm[k], nm[q - k] * fx, -nm[k], nm[q - k] * fy])
    return pts, nrm


# ---------------------------------------------------------------------------
# sweeps

def _hard_loop(rings: np.ndarray, base: int):
    """Faces of a closed hard-edged box sweep.

    ``rings`` is (n, 4, 3): the 4 section corners per ring. Each section side
    becomes its own strip with private vertices.
    Returns (vertices (8n, 3), faces (8n, 3)).
    """
    n = len(rings)
    verts = []
    faces = []
    for side in range(4):
        a, b = side, (side + 1) % 4
        strip = np.stack([rings[:, a], rings[:, b]], axis=1).reshape(-1, 3)
        off = base + side * 2 * n
        verts.append(strip)
        i = np.arange(n)
        j = (i + 1) % n
        va, vb = off + 2 * i, off + 2 * i + 1
        wa, wb = off + 2 * j, off + 2 * j + 1
        faces.append(np.stack([va, wa, vb], axis=1))
        faces.append(np.stack([vb, wa, wb], axis=1))
    return np.concatenate(verts), np.concatenate(faces)


def _hard_open(rings: np.ndarray, base: int):
    """Open hard-edged box sweep: 8 verts per ring, 8 faces per segment."""
    n = len(rings)
    verts = []
    faces = []
    for side in range(4):
        a, b = side, (side + 1) % 4
        strip = np.stack([rings[:, a], rings[:, b]], axis=1).reshape(-1, 3)
        off = base + side * 2 * n
        verts.append(strip)
        i = np.arange(n - 1)
        va, vb = off + 2 * i, off + 2 * i + 1
        wa, wb = va + 2, vb + 2
        faces.append(np.stack([va, wa, vb], axis=1))
        faces.append(np.stack([vb, wa, wb], axis=1))
    return np.concatenate(verts), np.concatenate(faces)


def _smooth_capped(rings: np.ndarray, base: int):
    """Smooth box sweep with shared corners, capped at both ends."""
    n = len(rings)
    verts = rings.reshape(-1, 3)
    faces = []
    i = np.arange(n - 1)
    for side in range(4):
        a, b = side, (side + 1) % 4
        va, vb = base + 4 * i + a, base + 4 * i + b
        wa, wb = va + 4, vb + 4
        faces.append(np.stack([va, wa, vb], axis=1))
        faces.append(np.stack([vb, wa, wb], axis=1))
    first, last = base, base + 4 * (n - 1)
    faces.append(np.array([[first, first + 2, first + 1], [first, first + 3, first + 2]]))
    faces.append(np.array([[last, last + 1, last + 2], [last, last + 2, last + 3]]))
    return verts, np.concatenate(faces)


def _sweep_frames(path: np.ndarray, up_hint: np.ndarray):
    """Tangent/normal/binormal along a polyline path (rotation-free enough)."""
    tang = np.gradient(path, axis=0)
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    side = np.cross(up_hint, tang)
    side /= np.linalg.norm(side, axis=1, keepdims=True)
    up = np.cross(tang, side)
    return tang, side, up


def _box_rings(path, side, up, half_side, half_up):
    c = path[:, None, :]
    s = side[:, None, :]
    u = up[:, None, :]
    signs = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    return c + signs[None, :, 0, None] * half_side * s + signs[None, :, 1, None] * half_up * u


def _lens_center_x(params):
    return params.bridge_width / 2.0 + params.lens_width / 2.0


def _left_rim_rings(params):
    """(N, 4, 3) rim section corners of the +x lens.

    Corner order: inner-front, outer-front, outer-back, inner-back.
    """
    pts, nrm = lens_outline(params)
    cx = _lens_center_x(params)
    # left lens (+x): mirror the outline so its temporal side faces +x;
    # outline is already symmetric, so only the centre shifts.
    inner = np.column_stack([pts[:, 0] + cx, pts[:, 1]])
    outer = inner + params.rim_thickness * nrm
    z0, z1 = 0.0, -params.rim_depth
    rings = np.empty((len(pts), 4, 3))
    rings[:, 0, :2], rings[:, 0, 2] = inner, z0
    rings[:, 1, :2], rings[:, 1, 2] = outer, z0
    rings[:, 2, :2], rings[:, 2, 2] = outer, z1
    rings[:, 3, :2], rings[:, 3, 2] = inner, z1
    return rings


def _left_temple_rings(params, rim_rings):
    hinge_ring = rim_rings[_HINGE_OFFSET]
    outer_back = hinge_ring[2]
    tw = 0.6 * params.rim_thickness
    th = max(params.rim_depth, 0.8 * params.rim_thickness)
    start = outer_back + np.array([-tw / 2.0, 0.0, 0.0])
    length = params.temple_length
    t = np.linspace(0.0, 1.0, TEMPLE_RINGS)
    # straight shaft, then a smooth drop over the last 30 % (ear bend)
    bend = np.clip((t - 0.7) / 0.3, 0.0, 1.0)
    drop = -0.18 * length * bend ** 2
    local = np.column_stack([np.zeros_like(t), drop, -length * t])
    # pantoscopic tilt: rotate about x through the hinge
    ang = math.radians(params.pantoscopic_angle)
    ca, sa = math.cos(ang), math.sin(ang)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    path = start + local @ rot.T
    tang, side, up = _sweep_frames(path, np.array([0.0, 1.0, 0.0]))
    return _box_rings(path, side, up, tw / 2.0, th / 2.0)


def _bridge_rings(params, rim_rings):
    n = RIM_SAMPLES
    # nasal extreme of the +x lens is sample n/2; go upwards (backwards in index)
    anchor = rim_rings[n // 2 - _BRIDGE_OFFSET]
    mid_pt = 0.5 * (anchor[0] + anchor[1])
    x_end = mid_pt[0]
    y_end = mid_pt[1]
    rise = 0.15 * params.bridge_width
    x = np.linspace(-x_end, x_end, BRIDGE_RINGS)
    y = y_end + rise * (1.0 - (x / x_end) ** 2)
    z = np.full_like(x, -params.rim_depth / 2.0)
    path = np.column_stack([x, y, z])
    tang, side, up = _sweep_frames(path, np.array([0.0, 0.0, 1.0]))
    half_h = 0.4 * params.rim_thickness
    half_d = 0.5 * params.rim_depth
    # side ~ +y, up ~ +z for a path along +x
    return _box_rings(path, side, up, half_h, half_d)


_MIRROR = np.array([-1.0, 1.0, 1.0])


def _layout():
    """Vertex offsets of each part in the shared topology."""
    rim = 8 * RIM_SAMPLES
    temple = 4 * TEMPLE_RINGS
    bridge = 8 * BRIDGE_RINGS
    off = {}
    off["rim_l"] = 0
    off["rim_r"] = rim
    off["bridge"] = 2 * rim
    off["temple_l"] = 2 * rim + bridge
    off["temple_r"] = 2 * rim + bridge + temple
    off["total"] = 2 * rim + bridge + 2 * temple
    return off


def _keypoint_spec() -> KeypointSpec:
    off = _layout()
    n = RIM_SAMPLES
    step = n // 12

    def rim_kp(base):
        # front strip (side 0) holds inner-front (even) and outer-front (odd)
        outline = [base + 2 * (step // 2 + step * k) for k in range(12)]
        top = base + 2 * (n // 4) + 1
        bottom = base + 2 * (3 * n // 4) + 1
        return outline + [top, bottom]

    def temple_kp(base):
        rings = [0] + [int(round(f * (TEMPLE_RINGS - 1))) for f in (0.2, 0.4, 0.6, 0.8)] + [TEMPLE_RINGS - 1]
        return [base + 4 * r + 2 for r in rings]

    # bridge top-front corner (section corner 2, second vertex of strip 1);
    # ring 0 sits at -x
    b0 = off["bridge"] + 2 * BRIDGE_RINGS
    bridge_r = b0 + 1
    bridge_l = b0 + 2 * (BRIDGE_RINGS - 1) + 1
    left_rim, right_rim = rim_kp(off["rim_l"]), rim_kp(off["rim_r"])
    left_tmp, right_tmp = temple_kp(off["temple_l"]), temple_kp(off["temple_r"])
    front = left_rim + right_rim + [bridge_l, bridge_r]
    temple = left_tmp + right_tmp
    pairs = list(zip(left_rim, right_rim)) + [(bridge_l, bridge_r)] + list(zip(left_tmp, right_tmp))
    return KeypointSpec(tuple(front + temple), tuple(front), tuple(temple), tuple(pairs))


KEYPOINTS = _keypoint_spec()


def synth_frame(params: FrameParams | None = None) -> tuple[Mesh, KeypointSpec]:
    """Build one frame mesh and its keypoint specification."""
    params = params or FrameParams()
    params.validate()
    off = _layout()
    rim_rings = _left_rim_rings(params)
    v_rim_l, f_rim_l = _hard_loop(rim_rings, off["rim_l"])
    v_rim_r = v_rim_l * _MIRROR
    f_rim_r = f_rim_l[:, ::-1] + (off["rim_r"] - off["rim_l"])

    br = _bridge_rings(params, rim_rings)
    v_br, f_br = _hard_open(br, off["bridge"])

    t_rings = _left_temple_rings(params, rim_rings)
    v_t_l, f_t_l = _smooth_capped(t_rings, off["temple_l"])
    v_t_r = v_t_l * _MIRROR
    f_t_r = f_t_l[:, ::-1] + (off["temple_r"] - off["temple_l"])

    verts = np.concatenate([v_rim_l, v_rim_r, v_br, v_t_l, v_t_r])
    faces = np.concatenate([f_rim_l, f_rim_r, f_br, f_t_l, f_t_r])
    assert len(verts) == off["total"]
    return Mesh(verts, faces), KEYPOINTS


# ---------------------------------------------------------------------------
# dataset

DEFAULT_STYLES = {
    "rectangle_1": FrameParams("rectangle", 52.0, 38.0, 18.0, 140.0, 4.0, 3.0, 0.0, 0.30),
    "rectangle_2": FrameParams("rectangle", 54.0, 34.0, 17.0, 142.0, 4.0, 3.0, 0.0, 0.18),
    "rectangle_3": FrameParams("rectangle", 50.0, 40.0, 19.0, 138.0, 4.0, 3.0, 0.0, 0.50),
    "circle": FrameParams("circle", 47.0, 47.0, 20.0, 140.0, 4.0, 3.0, 0.0, 0.0),
    "octagon_1": FrameParams("octagon", 51.0, 41.0, 18.0, 140.0, 4.0, 3.0, 0.0, 0.45),
    "octagon_2": FrameParams("octagon", 49.0, 43.0, 19.0, 138.0, 4.0, 3.0, 0.0, 0.30),
}


def size_variant(base: FrameParams, size_index: int, n_sizes: int = 9) -> FrameParams:
    """One of ``n_sizes`` sizes around ``base`` (the middle size is ``base``).

    Lens width steps by 1.5 mm with proportional height, bridge by 0.5 mm and
    temple length by 2.5 mm.
    """
    k = size_index - (n_sizes - 1) / 2.0
    dw = 1.5 * k
    scale = (base.lens_width + dw) / base.lens_width
    return replace(base,
                   lens_width=base.lens_width + dw,
                   lens_height=base.lens_height * scale,
                   bridge_width=base.bridge_width + 0.5 * k,
                   temple_length=base.temple_length + 2.5 * k)


def sample_dataset(styles=None, sizes_per_style: int = 9) -> list[Mesh]:
    """Frames for every style base at ``sizes_per_style`` sizes, style-major."""
    if sizes_per_style < 1:
        raise ValueError("sizes_per_style must be >= 1")
    if styles is None:
        styles = list(DEFAULT_STYLES.values())
    out = []
    for base in styles:
        if sizes_per_style == 1:
            out.append(synth_frame(base)[0])
            continue
        for s in range(sizes_per_style):
            out.append(synth_frame(size_variant(base, s, sizes_per_style))[0])
    return out


def perturb_keypoints(kp, noise_level: float, seed: int) -> np.ndarray:
    """Add isotropic Gaussian noise (normalized image units) and clamp to [0, 1]."""
    if not 0.0 <= noise_level <= 0.05:
        raise ValueError("noise_level must lie in [0, 0.05]")
    kp = np.asarray(kp, dtype=np.float64)
    if noise_level == 0.0:
        return kp.copy()
    rng = np.random.default_rng(seed)
    return np.clip(kp + rng.normal(0.0, noise_level, size=kp.shape), 0.0, 1.0)
