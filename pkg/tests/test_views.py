import json

import numpy as np
import pytest

from eyeglass_recon.camera import project
from eyeglass_recon.render import read_ppm
from eyeglass_recon.synth import DEFAULT_STYLES, synth_frame
from eyeglass_recon.views import ViewGrid, generate_views, load_view_keypoints


def test_default_grid_cardinality():
    g = ViewGrid()
    assert len(g) == 845 == len(g.angles())
    assert g.rolls == (-15.0, -8.0, -1.0, 6.0, 13.0)
    assert g.yaws[0] == -30.0 and g.yaws[-1] == 30.0 and len(g.yaws) == 13
    assert g.resolution == (1024, 1024)
    assert ViewGrid.from_dict(g.to_dict()) == g


def test_single_view_files(tmp_path):
    mesh, spec = synth_frame(DEFAULT_STYLES["rectangle_1"])
    grid = ViewGrid.single(10, -5, 6, resolution=(64, 48))
    manifest = generate_views(mesh, spec, grid, tmp_path)
    assert len(manifest) == 1
    rec = json.loads((tmp_path / manifest[0]["keypoints"]).read_text())
    assert set(rec) >= {"image", "camera", "keypoints"}
    assert set(rec["camera"]) >= {"position", "rotation", "fov_deg"}
    cam = grid.cameras(mesh)[0]
    uv, _, _ = project(cam, mesh.vertices[list(spec.indices)])
    assert np.array_equal(np.array(rec["keypoints"]), uv)
    kp, vis = load_view_keypoints(tmp_path / manifest[0]["keypoints"])
    assert kp.shape == (42, 2) and vis.all()
    img = read_ppm(tmp_path / manifest[0]["image"])
    assert img.shape == (48, 64, 3)
    sil = read_ppm(tmp_path / "view_0000_sil.pgm")
    assert sil.shape == (48, 64) and 0 < sil.sum() < sil.size
    assert json.loads((tmp_path / "manifest.json").read_text()) == manifest


def test_frontal_keypoints_mirror():
    mesh, spec = synth_frame(DEFAULT_STYLES["octagon_2"])
    cam = ViewGrid.single(resolution=(128, 128)).cameras(mesh)[0]
    uv, _, _ = project(cam, mesh.vertices)
    # projected symmetry axis of a frontal view through the bbox centre is u = 0.5
    for l, r in spec.sym_pairs:
        assert abs(uv[l, 0] + uv[r, 0] - 1.0) < 1e-4
        assert abs(uv[l, 1] - uv[r, 1]) < 1e-4


def test_views_are_byte_identical(tmp_path):
    mesh, spec = synth_frame()
    grid = ViewGrid((-10.0, 10.0), (0.0,), (-1.0,), resolution=(32, 32))
    generate_views(mesh, spec, grid, tmp_path / "a")
    generate_views(mesh, spec, grid, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 2 * 3 + 1
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_grid_frame_stays_in_view():
    mesh, _ = synth_frame(DEFAULT_STYLES["rectangle_2"])
    grid = ViewGrid((-30.0, 30.0), (-30.0, 30.0), (-15.0, 13.0), resolution=(64, 64))
    for cam in grid.cameras(mesh):
        uv, _, vis = project(cam, mesh.vertices)
        assert vis.all()
        assert uv.min() > 0.0 and uv.max() < 1.0


def test_empty_axis_rejected():
    with pytest.raises(ValueError):
        ViewGrid(yaws=())
