"""Acceptance suite: one test (or test group) per numbered criterion.

Tolerances are pinned here. The terminal summary prints one PASS/FAIL line
per criterion with the measured values.
"""
import time
from math import comb

import numpy as np
import pytest

from eyeglass_recon.camera import Camera, orbit_camera
from eyeglass_recon.evaluate import SuiteSpec, keypoint_error, run_suite
from eyeglass_recon.ffd import deform, lattice_from_box
from eyeglass_recon.mesh import Mesh, bbox_diagonal
from eyeglass_recon.pose import estimate_pose, proj_keypoints
from eyeglass_recon.render import render_hard, render_soft, render_soft_backward
from eyeglass_recon.synth import DEFAULT_STYLES, KEYPOINTS, perturb_keypoints, synth_frame
from eyeglass_recon.template import arithmetic_mean, build_template
from eyeglass_recon.views import ViewGrid, frame_target, view_keypoints

from _pipeline import run_pipeline

STYLES = sorted(DEFAULT_STYLES)

# pinned tolerances
FFD_ATOL = 1e-9
BASIS_ATOL = 1e-12
GRAD_REL = 1e-2
GRAD_ABS_FLOOR = 1e-7      # both gradients below this count as agreeing zeros
GRAD_FRACTION = 0.98
FD_STEP = 1e-4
POSE_POS_FRAC = 0.01
POSE_ROT_DEG = 1.0
POSE_FRACTION = 0.95
NOISE_SIGMA = 0.0211
NOISE_MEAN_REL = 0.05
PCK_MIN = 90.0
RE_MAX = 0.12
IOU_MIN = 0.88
RECON_SECONDS_MAX = 600.0
NOISE_IOU_DROP = 0.05


class _Stub:
    indices = (0,)


KEYPOINTS_STUB = _Stub()


def criterion(num, title):
    return pytest.mark.criterion(num, title)


# ---------------------------------------------------------------------------
# shared reconstructions (criteria 8-10)

@pytest.fixture(scope="session")
def recon(template, lattice):
    """Cached single-view reconstruction rows keyed by their case settings."""
    cache = {}

    def run(style, yaw=0.0, noise=0.0, **overrides):
        key = (style, yaw, noise, tuple(sorted(overrides.items())))
        if key not in cache:
            suite = SuiteSpec.from_dict({"cases": [{
                "style": style, "views": [[yaw, 0.0, 0.0]], "noise_level": noise,
                "weight_overrides": overrides, "seed": 0}]})
            rep = run_suite(suite, template, lattice)
            row = dict(rep.rows[0], seconds=rep.timings[0]["seconds"])
            assert row["status"] == "ok", row["error"]
            cache[key] = row
        return cache[key]

    return run


# ---------------------------------------------------------------------------

@criterion(1, "FFD exactness")
def test_ffd_exactness(template, lattice, record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    V = template.mesh.vertices
    err0 = np.max(np.abs(deform(lattice, np.zeros((400, 3))) - V))
    t = np.array([3.5, -1.25, 7.0])
    err_t = np.max(np.abs(deform(lattice, np.tile(t, (400, 1))) - (V + t)))
    l, m, n = lattice.dims
    delta = rng.normal(scale=2.0, size=(400, 3))
    P = (lattice.control_points + delta).reshape(l + 1, m + 1, n + 1, 3)
    got = deform(lattice, delta)
    err_o = 0.0
    for vi in rng.choice(len(V), 100, replace=False):
        s, tt, u = lattice.local_coords(V[vi])
        acc = np.zeros(3)
        for i in range(l + 1):
            for j in range(m + 1):
                for k in range(n + 1):
                    w = (comb(l, i) * s ** i * (1 - s) ** (l - i)
                         * comb(m, j) * tt ** j * (1 - tt) ** (m - j)
                         * comb(n, k) * u ** k * (1 - u) ** (n - k))
                    acc += w * P[i, j, k]
        err_o = max(err_o, np.max(np.abs(got[vi] - acc)))
    secs = time.perf_counter() - t0
    record_property("max_err", f"{max(err0, err_t, err_o):.1e}")
    record_property("seconds", f"{secs:.2f}")
    assert err0 < FFD_ATOL and err_t < FFD_ATOL and err_o < FFD_ATOL
    assert secs < 5.0


@criterion(2, "Bernstein basis properties")
def test_basis_properties(lattice, record_property):
    t0 = time.perf_counter()
    B = lattice.basis
    row_err = np.max(np.abs(B.sum(axis=1) - 1.0))
    corners = lattice.origin + np.array(
        [[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=float) @ lattice.axes
    Bc = lattice_from_box(corners, lattice.dims, lattice.origin, lattice.axes, 0.0).basis
    one_hot = np.all(np.sort(Bc, axis=1)[:, -1] == 1.0) and np.all(np.sort(Bc, axis=1)[:, :-1] == 0)
    record_property("row_sum_err", f"{row_err:.1e}")
    assert row_err < BASIS_ATOL
    assert B.min() >= 0.0
    assert one_hot
    assert time.perf_counter() - t0 < 5.0


def _random_scene(rng):
    n_tri = rng.integers(1, 5)
    v = rng.uniform(-3, 3, size=(3 * n_tri, 3)) * [1, 1, 0.3]
    return v, np.arange(3 * n_tri).reshape(-1, 3)


@criterion(3, "renderer gradients vs finite differences")
def test_renderer_gradients(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cam = Camera([0.0, 0.0, 10.0], fov_deg=60.0, resolution=(16, 16))
    agree = total = trivial = 0
    for scene in range(50):
        gamma = (0.5, 1.5)[scene % 2]
        v, f = _random_scene(rng)
        Ws, Wc = rng.normal(size=(16, 16)), rng.normal(size=(16, 16, 3))

        def fwd(x):
            r = render_soft(cam, x, f, gamma=gamma)
            return np.sum(Ws * r.silhouette) + np.sum(Wc * r.color)

        g = render_soft_backward(render_soft(cam, v, f, gamma=gamma), Ws, Wc)
        for idx in np.ndindex(v.shape):
            e = np.zeros_like(v)
            e[idx] = FD_STEP
            fd = (fwd(v + e) - fwd(v - e)) / (2 * FD_STEP)
            a = g[idx]
            scale = max(abs(a), abs(fd))
            trivial += scale < GRAD_ABS_FLOOR
            agree += scale < GRAD_ABS_FLOOR or abs(a - fd) < GRAD_REL * scale
            total += 1
    frac = agree / total
    secs = time.perf_counter() - t0
    record_property("agree", f"{frac:.4f} of {total} ({trivial} both ~0)")
    record_property("seconds", f"{secs:.1f}")
    assert frac >= GRAD_FRACTION
    assert secs < 120.0


@criterion(4, "soft to hard consistency")
def test_soft_to_hard(record_property):
    t0 = time.perf_counter()
    mesh, _ = synth_frame(DEFAULT_STYLES["circle"])
    target, dist = frame_target(mesh, 1.5)
    cam = orbit_camera(target, dist, 10, -5, 0, 30, (128, 128))
    hard = render_hard(cam, mesh, silhouette=True).pixels
    errs = [float(np.mean(np.abs(render_soft(cam, mesh.vertices, mesh.faces, gamma=g).silhouette
                                 - hard))) for g in (4.0, 2.0, 1.0, 0.5)]
    record_property("mean_abs", " > ".join(f"{e:.4f}" for e in errs))
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert time.perf_counter() - t0 < 60.0


@criterion(5, "Weiszfeld template")
def test_weiszfeld(dataset, record_property):
    t0 = time.perf_counter()
    history = []
    tm = build_template(dataset, KEYPOINTS, history=history)
    steps = np.diff(history)
    record_property("iterations", tm.iterations)
    assert len(dataset) == 54
    assert np.all(steps <= 0.0), f"objective increased by {steps.max()}"
    # stopped on the 1e-6 * diag step tolerance, not on the 200-step cap
    assert tm.iterations < 200
    assert 10 <= tm.iterations <= 100

    # planted instance: arms in opposite directions with unequal lengths
    rng = np.random.default_rng(5)
    m0 = rng.normal(size=9)
    pts = []
    for _ in range(4):
        u = rng.normal(size=9)
        u /= np.linalg.norm(u)
        pts += [m0 + rng.uniform(1, 3) * u, m0 - rng.uniform(4, 6) * u]
    tri = np.array([[0, 1, 2]])
    data = [Mesh(p.reshape(3, 3), tri) for p in pts]
    tol = 1e-6 * bbox_diagonal(arithmetic_mean(data))
    planted = build_template(data, KEYPOINTS_STUB, tol=tol, max_iter=200)
    err = np.linalg.norm(planted.mesh.vertices.ravel() - m0)
    record_property("planted_err", f"{err:.1e} (tol {tol:.1e})")
    assert err < tol
    assert time.perf_counter() - t0 < 60.0


def _pose_cells(full):
    if full:
        return ViewGrid(resolution=(256, 256)).angles()
    return [(y, p, r) for y in (-30.0, 0.0, 30.0) for p in (-30.0, 0.0, 30.0)
            for r in (-15.0, -1.0, 13.0)]


@criterion(6, "pose round trip over the view grid")
def test_pose_round_trip(template, request, record_property):
    t0 = time.perf_counter()
    full = request.config.getoption("--full-grid")
    target, dist = frame_target(template.mesh)
    ok, failures, worst = 0, [], 0.0
    cells = _pose_cells(full)
    for yaw, pitch, roll in cells:
        cam = orbit_camera(target, dist, yaw, pitch, roll, 30.0, (256, 256))
        est = estimate_pose(template, proj_keypoints(cam, template))
        dpos = np.linalg.norm(est.camera.position - cam.position) / dist
        c = (np.trace(est.camera.R.T @ cam.R) - 1.0) / 2.0
        drot = np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))
        worst = max(worst, est.final_reproj_error)
        if dpos < POSE_POS_FRAC and drot < POSE_ROT_DEG:
            ok += 1
        else:
            failures.append((yaw, pitch, roll))
    frac = ok / len(cells)
    secs = time.perf_counter() - t0
    record_property("cells", len(cells))
    record_property("recovered", f"{frac:.3f}")
    record_property("worst_reproj", f"{worst:.1e}")
    record_property("seconds", f"{secs:.0f}")
    if failures:
        record_property("failed_cells", failures)
    assert frac >= POSE_FRACTION
    assert secs < (1800.0 if full else 120.0)


@criterion(7, "keypoint noise calibration")
def test_keypoint_noise(record_property):
    mesh, spec = synth_frame(DEFAULT_STYLES["rectangle_1"])
    grid = ViewGrid()
    truth, pred = [], []
    for k, cam in enumerate(grid.cameras(mesh)):
        kp, _ = view_keypoints(cam, mesh, spec)
        truth.append(kp)
        pred.append(perturb_keypoints(kp, NOISE_SIGMA, k))
    err, pck = keypoint_error(pred, truth)
    expect = 100 * NOISE_SIGMA * np.sqrt(np.pi / 2)
    record_property("avg_error_pct", f"{err:.4f} (predicted {expect:.4f})")
    record_property("pck5", f"{pck:.2f}")
    assert len(truth) == 845
    assert abs(err - expect) <= NOISE_MEAN_REL * expect
    assert pck >= PCK_MIN


@criterion(8, "end-to-end reconstruction per style")
@pytest.mark.parametrize("style", STYLES)
def test_end_to_end(recon, style, record_property):
    row = recon(style)
    record_property(style, f"RE {row['RE']:.4f} IoU {row['IoU']:.4f} {row['seconds']:.0f}s")
    assert row["RE"] <= RE_MAX
    assert row["IoU"] >= IOU_MIN
    assert row["seconds"] <= RECON_SECONDS_MAX


@criterion(9, "noise robustness")
@pytest.mark.parametrize("style", STYLES)
def test_noise_robustness(recon, style, record_property):
    clean, noisy = recon(style), recon(style, noise=NOISE_SIGMA)
    drop = clean["IoU"] - noisy["IoU"]
    record_property(style, f"IoU drop {drop:+.4f}")
    assert drop <= NOISE_IOU_DROP


@criterion(10, "ablation directions")
@pytest.mark.parametrize("style", STYLES)
def test_ablation_silhouette(recon, style, record_property):
    full, no_sil = recon(style), recon(style, sil=0.0)
    record_property(f"{style} no-sil", f"IoU {full['IoU']:.4f} -> {no_sil['IoU']:.4f}")
    assert no_sil["IoU"] <= full["IoU"]


@criterion(10, "ablation directions")
def test_ablation_keypoints(recon, record_property):
    full, no_kp = recon("rectangle_1"), recon("rectangle_1", kp=0.0)
    record_property("rectangle_1 no-kp", f"RE {full['RE']:.4f} -> {no_kp['RE']:.4f}")
    assert no_kp["RE"] > full["RE"]


@criterion(10, "ablation directions")
def test_ablation_symmetry(recon, record_property):
    full, no_sym = recon("rectangle_1", yaw=20.0), recon("rectangle_1", yaw=20.0, sym=0.0)
    record_property("yaw20 no-sym", f"asym {full['asym']:.2e} -> {no_sym['asym']:.2e}")
    assert no_sym["asym"] > full["asym"]


@criterion(11, "determinism of the full pipeline")
def test_determinism(tmp_path, record_property):
    a = run_pipeline(tmp_path / "a")
    b = run_pipeline(tmp_path / "b")
    record_property("files", len(a))
    assert a.keys() == b.keys()
    differing = [str(k) for k in a if a[k] != b[k]]
    assert not differing, differing
