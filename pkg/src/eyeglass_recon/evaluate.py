"""Reconstruction metrics and the batch evaluation driver."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .camera import orbit_camera
from .ffd import FfdLattice
from .losses import LossWeights
from .mesh import Mesh, MeshError, bbox_diagonal
from .reconstruct import OptimConfig, reconstruct
from .render import render_hard, silhouette_from_image
from .synth import DEFAULT_STYLES, KeypointSpec, perturb_keypoints, synth_frame
from .template import TemplateModel
from .views import ViewGrid, frame_target, view_keypoints

log = logging.getLogger(__name__)

PCK_THRESHOLD = 0.05
TEST_FRACTION = 0.2
# evaluation views: closer and smaller than the dataset renders
EVAL_GRID = {"resolution": [256, 256], "distance_factor": 1.5}


def reconstruction_error(recon: Mesh, truth: Mesh) -> float:
    """Mean vertex distance in units of the truth's bounding-box diagonal."""
    if not recon.same_topology(truth):
        raise MeshError("reconstruction and truth have different topology")
    d = bbox_diagonal(truth)
    return float(np.mean(np.linalg.norm(recon.vertices - truth.vertices, axis=1)) / d)


def mask_iou(a, b) -> float:
    a, b = np.asarray(a) > 0, np.asarray(b) > 0
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def iou_metric(recon: Mesh, truth_silhouette, camera) -> float:
    """IoU between the hard silhouette of ``recon`` seen by ``camera`` and a mask."""
    mask = np.asarray(truth_silhouette)
    cam = camera.with_resolution((mask.shape[1], mask.shape[0]))
    return mask_iou(render_hard(cam, recon, silhouette=True).pixels, mask)


def keypoint_error(pred, truth) -> tuple[float, float]:
    """(mean error x 100, percentage of keypoints within 0.05) over all sets."""
    if len(pred) != len(truth):
        raise ValueError("prediction and truth lists differ in length")
    if len(pred) == 0:
        return 0.0, 100.0
    p = np.stack([np.asarray(k, dtype=np.float64).reshape(-1, 2) for k in pred])
    t = np.stack([np.asarray(k, dtype=np.float64).reshape(-1, 2) for k in truth])
    if p.shape != t.shape:
        raise ValueError("keypoint sets differ in size")
    err = np.linalg.norm(p - t, axis=-1)
    return float(err.mean() * 100.0), float(np.mean(err <= PCK_THRESHOLD) * 100.0)


def asymmetry_residual(vertices, spec: KeypointSpec) -> float:
    """RMS mirror mismatch of keypoint pairs about their mean-x plane, per bbox diagonal."""
    v = np.asarray(vertices, dtype=np.float64)
    kp = v[list(spec.indices)]
    pairs = spec.pair_positions
    c = kp[:, 0].mean()
    l, r = kp[pairs[:, 0]], kp[pairs[:, 1]]
    res = np.column_stack([l[:, 0] + r[:, 0] - 2.0 * c, l[:, 1:] - r[:, 1:]])
    return float(np.sqrt(np.mean(np.sum(res ** 2, axis=1))) / bbox_diagonal(v))


@dataclass
class CaseSpec:
    style: str
    views: list = field(default_factory=lambda: [(0.0, 0.0, 0.0)])
    noise_level: float = 0.0
    weight_overrides: dict = field(default_factory=dict)
    seed: int = 0
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict, grid: ViewGrid) -> "CaseSpec":
        if d["style"] not in DEFAULT_STYLES:
            raise ValueError(f"unknown style {d['style']!r}")
        seed = int(d.get("seed", 0))
        views = d.get("views", [[0, 0, 0]])
        if isinstance(views, int):
            views = held_out_views(grid, views, seed)
        views = [tuple(float(a) for a in v) for v in views]
        return cls(d["style"], views, float(d.get("noise_level", 0.0)),
                   dict(d.get("weight_overrides", {})), seed, d.get("name", ""))


@dataclass
class SuiteSpec:
    cases: list
    optim: OptimConfig = field(default_factory=OptimConfig)
    grid: ViewGrid = field(default_factory=lambda: ViewGrid.from_dict(EVAL_GRID))
    weights: LossWeights = field(default_factory=LossWeights)
    sym_mode: str = "mirror"

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteSpec":
        grid = ViewGrid.from_dict({**EVAL_GRID, **d.get("grid", {})})
        return cls([CaseSpec.from_dict(c, grid) for c in d.get("cases", [])],
                   OptimConfig(**d.get("optim", {})), grid,
                   LossWeights.from_dict(d.get("weights", {})), d.get("sym_mode", "mirror"))

    @classmethod
    def load(cls, path) -> "SuiteSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def held_out_views(grid: ViewGrid, n: int, seed: int) -> list:
    """First ``n`` angles of a seeded 20% test split of the grid."""
    angles = grid.angles()
    n_test = max(1, int(round(TEST_FRACTION * len(angles))))
    order = np.random.default_rng(seed).permutation(len(angles))[:n_test]
    return [angles[k] for k in order[:n]]


@dataclass
class EvalReport:
    rows: list
    styles: dict
    keypoints: dict
    metadata: dict
    timings: list = field(default_factory=list)

    @property
    def mean_re(self) -> float:
        ok = [r["RE"] for r in self.rows if r["status"] == "ok"]
        return float(np.mean(ok)) if ok else float("nan")

    @property
    def mean_iou(self) -> float:
        ok = [r["IoU"] for r in self.rows if r["status"] == "ok"]
        return float(np.mean(ok)) if ok else float("nan")

    def to_dict(self) -> dict:
        return {"rows": self.rows, "styles": self.styles, "keypoints": self.keypoints,
                "mean_RE": self.mean_re, "mean_IoU": self.mean_iou, "metadata": self.metadata}

    def write(self, out_dir) -> None:
        """report.json, cases.csv, styles.csv and (non-deterministic) timings.json."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        cols = ["case", "style", "yaw", "pitch", "roll", "noise_level", "seed",
                "RE", "IoU", "asym", "kp_err_pct", "pose_error", "status", "error"]
        with open(out / "cases.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows)
        with open(out / "styles.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "style", "RE", "IoU", "n"])
            for key, s in self.styles.items():
                w.writerow([key, s["style"], f"{s['RE']:.6f}", f"{s['IoU']:.6f}", s["n"]])
        (out / "timings.json").write_text(json.dumps(self.timings, indent=1))


def view_case(truth: Mesh, spec: KeypointSpec, grid: ViewGrid, yaw, pitch, roll):
    """Ground-truth camera, rendered image, silhouette and keypoints for one view."""
    target, dist = frame_target(truth, grid.distance_factor)
    cam = orbit_camera(target, dist, yaw, pitch, roll, grid.fov_deg, grid.resolution)
    image = render_hard(cam, truth).pixels
    kp, vis = view_keypoints(cam, truth, spec)
    return cam, image, silhouette_from_image(image), kp, vis


def _run_view(job):
    (key, case, view_index, template, lattice, suite) = job
    yaw, pitch, roll = case.views[view_index]
    row = {"case": key, "style": case.style, "yaw": yaw, "pitch": pitch, "roll": roll,
           "noise_level": case.noise_level, "seed": case.seed + view_index,
           "RE": float("nan"), "IoU": float("nan"), "asym": float("nan"),
           "kp_err_pct": float("nan"), "pose_error": float("nan"), "status": "ok", "error": ""}
    kp_pair = None
    t0 = time.perf_counter()
    try:
        truth, spec = synth_frame(DEFAULT_STYLES[case.style])
        _, image, sil, kp, vis = view_case(truth, spec, suite.grid, yaw, pitch, roll)
        noisy = perturb_keypoints(kp, case.noise_level, row["seed"])
        kp_pair = (noisy.tolist(), kp.tolist())
        weights = suite.weights.with_overrides(**case.weight_overrides)
        res = reconstruct(image, noisy, template, lattice, weights, suite.optim,
                          fov_deg=suite.grid.fov_deg, sym_mode=suite.sym_mode)
        row.update(RE=reconstruction_error(res.mesh, truth),
                   IoU=iou_metric(res.mesh, sil, res.pose.camera),
                   asym=asymmetry_residual(res.mesh.vertices, spec),
                   kp_err_pct=keypoint_error([noisy], [kp])[0],
                   pose_error=float(res.pose.final_reproj_error))
    except Exception as exc:   # one failing case must not abort the suite
        log.exception("case %s view %d failed", key, view_index)
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row, kp_pair, time.perf_counter() - t0


def run_suite(suite: SuiteSpec, template: TemplateModel, lattice: FfdLattice,
              out_dir=None, threads: int = 1) -> EvalReport:
    """Reconstruct every (case, view) pair and score it against its truth frame."""
    jobs = []
    for ci, case in enumerate(suite.cases):
        key = case.name or f"{ci}:{case.style}"
        jobs += [(key, case, vi, template, lattice, suite) for vi in range(len(case.views))]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_view, jobs))
    else:
        results = [_run_view(j) for j in jobs]
    rows = [r for r, _, _ in results]
    styles = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        s = styles.setdefault(r["case"], {"style": r["style"], "RE": [], "IoU": []})
        s["RE"].append(r["RE"])
        s["IoU"].append(r["IoU"])
    for s in styles.values():
        s["n"] = len(s["RE"])
        s["RE"], s["IoU"] = float(np.mean(s["RE"])), float(np.mean(s["IoU"]))
    pairs = [p for _, p, _ in results if p is not None]
    err, pck = keypoint_error([p[0] for p in pairs], [p[1] for p in pairs])
    meta = {"optim": asdict(suite.optim), "weights": suite.weights.to_dict(),
            "grid": suite.grid.to_dict(), "sym_mode": suite.sym_mode,
            "template_hash": template.dataset_hash,
            "cases": [asdict(c) for c in suite.cases]}
    timings = [{"case": r["case"], "yaw": r["yaw"], "pitch": r["pitch"], "roll": r["roll"],
                "seconds": t} for r, _, t in results]
    report = EvalReport(rows, styles, {"avg_error_pct": err, "pck5": pck}, meta, timings)
    if out_dir is not None:
        report.write(out_dir)
    return report
