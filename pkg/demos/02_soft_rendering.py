"""
Soft silhouettes and their sharpness
====================================

Renders one frame with the soft rasterizer at decreasing gamma and compares
against the hard z-buffer mask. Thin rims make the soft mask spill outward,
which is why reconstruction ends on a sub-pixel gamma.

    python demos/02_soft_rendering.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from eyeglass_recon.evaluate import mask_iou
from eyeglass_recon.render import render_hard, render_soft, write_pgm16, write_ppm
from eyeglass_recon.synth import DEFAULT_STYLES, synth_frame
from eyeglass_recon.views import ViewGrid

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/02")
out.mkdir(parents=True, exist_ok=True)

mesh, _ = synth_frame(DEFAULT_STYLES["circle"])
cam = ViewGrid.single(yaw=15, pitch=-5, resolution=(256, 256),
                      distance_factor=1.5).cameras(mesh)[0]
hard = render_hard(cam, mesh, silhouette=True).pixels
write_ppm(out / "hard.pgm", hard)

print(" gamma  mean|soft-hard|  IoU(soft>0.5, hard)")
for gamma in (1.5, 0.75, 0.375, 0.2, 0.1):
    soft = render_soft(cam, mesh.vertices, mesh.faces, gamma=gamma).silhouette
    write_pgm16(out / f"soft_{gamma}.pgm", soft)
    print(f"{gamma:6.3f}  {np.mean(np.abs(soft - hard)):14.4f}  {mask_iou(soft > 0.5, hard):8.3f}")
