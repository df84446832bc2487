"""Rendered view grids with projected ground-truth keypoints."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Camera, orbit_camera, project
from .mesh import Mesh, bbox_diagonal
from .render import FRAME_COLOR, WHITE, render_hard, silhouette_from_image, write_ppm
from .synth import KeypointSpec

DISTANCE_FACTOR = 2.0   # camera distance in units of the frame's bbox diagonal


def _steps(lo: float, hi: float, step: float) -> tuple:
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(float(lo + k * step) for k in range(n))


@dataclass(frozen=True)
class ViewGrid:
    """Yaw/pitch/roll samples (degrees) of cameras orbiting the frame centre."""

    yaws: tuple = _steps(-30, 30, 5)
    pitches: tuple = _steps(-30, 30, 5)
    rolls: tuple = _steps(-15, 13, 7)
    resolution: tuple = (1024, 1024)
    fov_deg: float = 30.0
    distance_factor: float = DISTANCE_FACTOR

    def __post_init__(self):
        if not (self.yaws and self.pitches and self.rolls):
            raise ValueError("every grid axis needs at least one angle")
        if self.distance_factor <= 0:
            raise ValueError("distance_factor must be > 0")

    def __len__(self):
        return len(self.yaws) * len(self.pitches) * len(self.rolls)

    def angles(self) -> list[tuple[float, float, float]]:
        """(yaw, pitch, roll) triples, yaw-major."""
        return [(y, p, r) for y in self.yaws for p in self.pitches for r in self.rolls]

    def cameras(self, mesh: Mesh) -> list[Camera]:
        target, distance = frame_target(mesh, self.distance_factor)
        return [orbit_camera(target, distance, y, p, r, self.fov_deg, self.resolution)
                for y, p, r in self.angles()]

    @classmethod
    def single(cls, yaw=0.0, pitch=0.0, roll=0.0, **kw) -> "ViewGrid":
        return cls((float(yaw),), (float(pitch),), (float(roll),), **kw)

    def to_dict(self) -> dict:
        return {"yaws": list(self.yaws), "pitches": list(self.pitches), "rolls": list(self.rolls),
                "resolution": list(self.resolution), "fov_deg": self.fov_deg,
                "distance_factor": self.distance_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "ViewGrid":
        base = cls()
        return cls(tuple(d.get("yaws", base.yaws)), tuple(d.get("pitches", base.pitches)),
                   tuple(d.get("rolls", base.rolls)), tuple(d.get("resolution", base.resolution)),
                   float(d.get("fov_deg", base.fov_deg)),
                   float(d.get("distance_factor", base.distance_factor)))


def frame_target(mesh: Mesh, distance_factor: float = DISTANCE_FACTOR):
    """Bounding-box centre of ``mesh`` and the orbit distance for it."""
    v = mesh.vertices
    return (v.min(axis=0) + v.max(axis=0)) / 2, distance_factor * bbox_diagonal(mesh)


def view_keypoints(camera: Camera, mesh: Mesh, spec: KeypointSpec):
    """Normalized keypoint coordinates (42, 2) and visibility flags."""
    uv, _, vis = project(camera, mesh.vertices[list(spec.indices)])
    return uv, vis


def generate_views(mesh: Mesh, spec: KeypointSpec, grid: ViewGrid, out_dir,
                   color=FRAME_COLOR, bg=WHITE) -> list[dict]:
    """Render every grid view to ``out_dir`` with a keypoint JSON per image.

    Each view gets a P6 color image, a P5 silhouette (``*_sil.pgm``) and a
    keypoint JSON. Returns the manifest (also written as ``manifest.json``):
    one ``{"image", "keypoints", "yaw", "pitch", "roll"}`` record per view.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for k, ((yaw, pitch, roll), cam) in enumerate(zip(grid.angles(), grid.cameras(mesh))):
        stem = f"view_{k:04d}"
        image = render_hard(cam, mesh, color, bg).pixels
        write_ppm(out / f"{stem}.ppm", image)
        write_ppm(out / f"{stem}_sil.pgm", silhouette_from_image(image, bg))
        uv, vis = view_keypoints(cam, mesh, spec)
        record = {"image": f"{stem}.ppm", "camera": cam.to_dict(),
                  "keypoints": uv.tolist(), "visible": vis.tolist()}
        (out / f"{stem}.json").write_text(json.dumps(record, indent=1))
        manifest.append({"image": f"{stem}.ppm", "keypoints": f"{stem}.json",
                         "yaw": yaw, "pitch": pitch, "roll": roll})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def load_view_keypoints(path):
    """Read a keypoint JSON written by :func:`generate_views` (or a bare list)."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, list):
        return np.asarray(data, dtype=np.float64), None
    vis = data.get("visible")
    return (np.asarray(data["keypoints"], dtype=np.float64),
            None if vis is None else np.asarray(vis, dtype=bool))
