"""
Single-view reconstruction
==========================

Renders a ground-truth frame, estimates the camera from its 42 keypoints,
deforms the template to match the image and scores the result.

    python demos/03_pose_and_reconstruction.py [style] [iterations] [out_dir]
"""
import sys
import time
from pathlib import Path

from eyeglass_recon.evaluate import (asymmetry_residual, iou_metric, reconstruction_error,
                                     view_case, SuiteSpec)
from eyeglass_recon.ffd import build_lattice
from eyeglass_recon.mesh import save_obj
from eyeglass_recon.reconstruct import OptimConfig, reconstruct
from eyeglass_recon.render import render_hard, write_ppm
from eyeglass_recon.synth import DEFAULT_STYLES, KEYPOINTS, sample_dataset, synth_frame
from eyeglass_recon.template import build_template

style = sys.argv[1] if len(sys.argv) > 1 else "rectangle_2"
iters = int(sys.argv[2]) if len(sys.argv) > 2 else 1000
out = Path(sys.argv[3] if len(sys.argv) > 3 else "demo_out/03")
out.mkdir(parents=True, exist_ok=True)

template = build_template(sample_dataset(), KEYPOINTS)
lattice = build_lattice(template.mesh)
truth, spec = synth_frame(DEFAULT_STYLES[style])
grid = SuiteSpec([]).grid
cam, image, sil, kp, _ = view_case(truth, spec, grid, 0.0, 0.0, 0.0)
write_ppm(out / "input.ppm", image)

# %%
# Pose first: the camera that best projects the template's keypoints onto
# the observed ones. It is then held fixed while the shape is fitted.
t0 = time.perf_counter()
res = reconstruct(image, kp, template, lattice, config=OptimConfig(max_iters=iters))
print(f"{style}: {len(res.loss_history)} iterations in {time.perf_counter() - t0:.0f} s, "
      f"pose reprojection {res.pose.final_reproj_error:.2e}")

for name, mesh in (("template", template.mesh), ("reconstruction", res.mesh)):
    print(f"{name:15s} RE {reconstruction_error(mesh, truth):.4f}  "
          f"IoU {iou_metric(mesh, sil, res.pose.camera):.4f}  "
          f"asym {asymmetry_residual(mesh.vertices, spec):.2e}")

fitted = res.pose.camera.with_resolution(grid.resolution)
write_ppm(out / "template.ppm", render_hard(fitted, template.mesh).pixels)
write_ppm(out / "reconstruction.ppm", render_hard(fitted, res.mesh).pixels)
save_obj(res.mesh, out / "reconstruction.obj")
