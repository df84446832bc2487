"""Command-line entry point: ``eyeglass-recon <command> [flags]``.

Every command accepts ``--config file.json``; keys of the section named after
the command (``{"reconstruct": {"iters": 800}}``) fill in flags that were not
given on the command line. Exit codes: 0 success, 1 domain error, 2 usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("eyeglass_recon")


class JsonFormatter(logging.Formatter):
    def format(self, record):
        out = {"level": record.levelname.lower(), "logger": record.name,
               "msg": record.getMessage()}
        fields = getattr(record, "fields", None)
        if fields:
            out.update(fields)
        if record.exc_info:
            out["exc"] = self.formatException(record.exc_info)
        return json.dumps(out, default=float)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    logging.getLogger("numba").setLevel(logging.WARNING)


def _dump(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_json(path):
    return json.loads(Path(path).read_text())


def _spec(path):
    from .synth import KEYPOINTS, KeypointSpec
    return KeypointSpec.from_dict(_load_json(path)) if path else KEYPOINTS


def _template(path, spec_path):
    from .mesh import load_obj
    from .template import TemplateModel
    return TemplateModel(load_obj(path), _spec(spec_path))


def _camera_block(path):
    """Camera dict from a pose JSON or a dataset keypoint JSON."""
    d = _load_json(path)
    return d.get("camera", d)


# ---------------------------------------------------------------------------
# commands

def cmd_synth_dataset(a) -> int:
    from .mesh import save_obj
    from .synth import DEFAULT_STYLES, KEYPOINTS, size_variant, synth_frame
    from .views import ViewGrid, generate_views

    out = Path(a.out)
    styles = a.styles or list(DEFAULT_STYLES)
    unknown = [s for s in styles if s not in DEFAULT_STYLES]
    if unknown:
        raise ValueError(f"unknown styles {unknown}")
    (out / "frames").mkdir(parents=True, exist_ok=True)
    params = {}
    for name in styles:
        for k in range(a.sizes):
            p = size_variant(DEFAULT_STYLES[name], k, a.sizes) if a.sizes > 1 else DEFAULT_STYLES[name]
            mesh, _ = synth_frame(p)
            stem = f"{name}_{k}"
            save_obj(mesh, out / "frames" / f"{stem}.obj")
            params[stem] = p.to_dict()
    _dump(out / "params.json", params)
    _dump(out / "keypoints.json", KEYPOINTS.to_dict())
    if a.views:
        grid = ViewGrid.from_dict(_load_json(a.grid)) if a.grid else ViewGrid()
        for name in styles:
            mesh, spec = synth_frame(DEFAULT_STYLES[name])
            generate_views(mesh, spec, grid, out / "views" / name)
    log.info("dataset written", extra={"fields": {"frames": len(params), "out": str(out)}})
    return 0


def cmd_build_template(a) -> int:
    from .ffd import DEFAULT_DIMS, build_lattice
    from .mesh import load_obj, save_obj
    from .template import build_template

    root = Path(a.dataset)
    files = sorted((root / "frames").glob("*.obj")) or sorted(root.glob("*.obj"))
    if not files:
        raise FileNotFoundError(f"no .obj files under {root}")
    dataset = [load_obj(f) for f in files]
    spec = _spec(a.spec or (root / "keypoints.json" if (root / "keypoints.json").exists() else None))
    tm = build_template(dataset, spec, tol=a.tol, max_iter=a.max_iter)
    save_obj(tm.mesh, a.out)
    _dump(a.keypoints, {**spec.to_dict(), "provenance": {
        "dataset_hash": tm.dataset_hash, "iterations": tm.iterations, "members": len(dataset)}})
    if a.lattice:
        dims = tuple(a.dims) if a.dims else DEFAULT_DIMS
        build_lattice(tm.mesh, dims).save(a.lattice)
    log.info("template built", extra={"fields": {"iterations": tm.iterations,
                                                  "members": len(dataset)}})
    return 0


def cmd_render(a) -> int:
    from .camera import Camera
    from .mesh import load_obj
    from .render import render_hard, render_soft, silhouette_from_image, write_pgm16, write_ppm

    mesh = load_obj(a.mesh)
    res = tuple(a.resolution) if a.resolution else None
    cam = Camera.from_dict(_camera_block(a.camera), res)
    if a.gamma is not None:
        r = render_soft(cam, mesh.vertices, mesh.faces, gamma=a.gamma)
        write_ppm(a.out, r.color)
        if a.silhouette:
            write_pgm16(a.silhouette, r.silhouette)
    else:
        img = render_hard(cam, mesh).pixels
        write_ppm(a.out, img)
        if a.silhouette:
            write_ppm(a.silhouette, silhouette_from_image(img))
    return 0


def _observed(path):
    from .pose import Keypoints2D
    from .views import load_view_keypoints
    pts, vis = load_view_keypoints(path)
    return Keypoints2D(pts, vis)


def _pose_dict(p) -> dict:
    return {"camera": p.camera.to_dict(), "final_reproj_error": p.final_reproj_error,
            "iterations": p.iterations, "converged": bool(p.converged)}


def cmd_estimate_pose(a) -> int:
    from .pose import estimate_pose

    tm = _template(a.template, a.template_keypoints)
    res = tuple(a.resolution) if a.resolution else (256, 256)
    pose = estimate_pose(tm, _observed(a.keypoints), fov_deg=a.fov, resolution=res)
    _dump(a.out, _pose_dict(pose))
    log.info("pose estimated", extra={"fields": {"error": pose.final_reproj_error}})
    return 0


def cmd_reconstruct(a) -> int:
    from .camera import Camera
    from .ffd import delta_to_list, load_lattice
    from .losses import LossWeights
    from .mesh import save_obj
    from .pose import PoseEstimate
    from .reconstruct import OptimConfig, reconstruct
    from .render import read_ppm

    tm = _template(a.template, a.template_keypoints)
    lattice = load_lattice(a.lattice, tm.mesh)
    weights = LossWeights.load(a.weights) if a.weights else LossWeights()
    opt = _load_json(a.optim) if a.optim else {}
    if a.iters is not None:
        opt["max_iters"] = a.iters
    if a.lr is not None:
        opt["learning_rate"] = a.lr
    config = OptimConfig(**opt)
    image = read_ppm(a.image)
    if image.ndim != 3:
        raise ValueError("reconstruct needs a color (P6) image")
    pose = None
    if a.pose:
        d = _load_json(a.pose)
        cam = Camera.from_dict(d.get("camera", d), (image.shape[1], image.shape[0]))
        pose = PoseEstimate(cam, float(d.get("final_reproj_error", float("nan"))),
                            int(d.get("iterations", 0)), bool(d.get("converged", True)))

    def on_iter(rec):
        log.debug("iteration", extra={"fields": rec})

    res = reconstruct(image, _observed(a.keypoints), tm, lattice, weights, config,
                      fov_deg=a.fov, pose=pose, callback=on_iter)
    save_obj(res.mesh, a.out)
    if a.history:
        _dump(a.history, res.loss_history)
    if a.delta:
        _dump(a.delta, delta_to_list(res.delta))
    if a.pose_out:
        _dump(a.pose_out, _pose_dict(res.pose))
    log.info("reconstructed", extra={"fields": {"iterations": len(res.loss_history),
                                                 **res.final_report}})
    return 0


def cmd_eval(a) -> int:
    from .evaluate import SuiteSpec, run_suite
    from .ffd import build_lattice, load_lattice
    from .synth import KEYPOINTS, sample_dataset
    from .template import build_template

    suite = SuiteSpec.load(a.suite)
    if a.seed:
        for case in suite.cases:
            case.seed += a.seed
    if not suite.cases:
        log.info("empty suite")
    if a.template:
        tm = _template(a.template, a.template_keypoints)
    else:
        tm = build_template(sample_dataset(), KEYPOINTS)
    lattice = load_lattice(a.lattice, tm.mesh) if a.lattice else build_lattice(tm.mesh)
    report = run_suite(suite, tm, lattice, a.out, threads=a.threads or 1)
    failed = sum(r["status"] != "ok" for r in report.rows)
    log.info("suite finished", extra={"fields": {"cases": len(report.rows), "failed": failed,
                                                  "mean_RE": report.mean_re,
                                                  "mean_IoU": report.mean_iou}})
    return 0


def cmd_version(a) -> int:
    print(__version__)
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file; its section for this command fills unset flags")
    common.add_argument("--verbose", action="store_true", default=None)
    common.add_argument("--threads", type=int, help="worker cap (default: all cores)")
    common.add_argument("--seed", type=int, help="offset added to every case seed (eval)")

    p = argparse.ArgumentParser(prog="eyeglass-recon", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("synth-dataset", parents=[common], help="write procedural frames")
    s.add_argument("--out", required=True)
    s.add_argument("--styles", nargs="+")
    s.add_argument("--sizes", type=int, default=9)
    s.add_argument("--views", action="store_true", default=None,
                   help="also render the view grid for each style's base frame")
    s.add_argument("--grid", help="ViewGrid JSON")
    s.set_defaults(func=cmd_synth_dataset)

    s = sub.add_parser("build-template", parents=[common], help="geometric-median template")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--keypoints", required=True, help="output keypoint-index JSON")
    s.add_argument("--spec", help="input keypoint-index JSON (default: dataset's)")
    s.add_argument("--lattice", help="also write an FFD lattice JSON here")
    s.add_argument("--dims", type=int, nargs=3)
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iter", type=int, default=200)
    s.set_defaults(func=cmd_build_template)

    s = sub.add_parser("render", parents=[common], help="render a mesh")
    s.add_argument("--mesh", required=True)
    s.add_argument("--camera", required=True, help="pose or keypoint JSON with a camera block")
    s.add_argument("--out", required=True)
    s.add_argument("--silhouette")
    s.add_argument("--resolution", type=int, nargs=2)
    s.add_argument("--gamma", type=float, help="soft render with this sharpness (pixels)")
    s.set_defaults(func=cmd_render)

    for name, func in (("estimate-pose", cmd_estimate_pose), ("reconstruct", cmd_reconstruct)):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--template", required=True)
        s.add_argument("--template-keypoints", help="keypoint-index JSON (default: shared topology)")
        s.add_argument("--keypoints", required=True, help="observed 2D keypoint JSON")
        s.add_argument("--out", required=True)
        s.add_argument("--fov", type=float, default=30.0)
        s.set_defaults(func=func)
    est, rec = sub.choices["estimate-pose"], sub.choices["reconstruct"]
    est.add_argument("--resolution", type=int, nargs=2)
    rec.add_argument("--image", required=True)
    rec.add_argument("--lattice", required=True)
    rec.add_argument("--weights")
    rec.add_argument("--optim", help="OptimConfig JSON")
    rec.add_argument("--iters", type=int)
    rec.add_argument("--lr", type=float)
    rec.add_argument("--pose", help="fixed pose JSON (skips pose estimation)")
    rec.add_argument("--history")
    rec.add_argument("--delta")
    rec.add_argument("--pose-out")

    s = sub.add_parser("eval", parents=[common], help="run an evaluation suite")
    s.add_argument("--suite", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--template")
    s.add_argument("--template-keypoints")
    s.add_argument("--lattice")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("version", parents=[common], help="print the package version")
    s.set_defaults(func=cmd_version)
    return p


def _apply_config(args, argv) -> None:
    """Fill flags absent from ``argv`` with the command's section of --config."""
    if not args.config:
        return
    cfg = _load_json(args.config)
    section = {**{k: v for k, v in cfg.items() if not isinstance(v, dict)},
               **cfg.get(args.command, {})}
    given = {tok.split("=")[0].lstrip("-").replace("-", "_") for tok in argv if tok.startswith("--")}
    for key, value in section.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise ValueError(f"config key {key!r} is not a flag of {args.command}")
        if key not in given:
            setattr(args, key, value)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config(args, argv)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    _setup_logging(bool(args.verbose))
    if args.threads:
        import numba
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        log.error(f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
