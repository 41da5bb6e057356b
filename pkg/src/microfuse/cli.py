"""Command line interface.

Subcommands: reconstruct, stitch, register, metrics, pipeline run, phantom,
serve. Run ``microfuse <subcommand> --help`` for the full flag list.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .imgio import (
    Image2D,
    export_axial_slices,
    load_frame_stack,
    load_image,
    load_labels,
    save_image,
    write_volume,
)
from .pipeline import PipelineConfig, run_case, write_report
from .reconstruct import VolumeSpec, reconstruct_volume
from .register import (
    LITERAL_PAPER_SCHEDULE,
    PyramidSchedule,
    RegistrationConfig,
    register_affine,
    register_ffd,
)
from .stitch import Fragment, RigidTransform2D, StitchPlan, compose_fragments, \
    fit_rigid_landmarks, orient_fragment
from .transforms import save_transforms


def _cmd_reconstruct(args) -> int:
    stack = load_frame_stack(args.manifest)
    spec = VolumeSpec(sigma_i=args.sigma_i, sigma_t=args.sigma_t)
    volume = reconstruct_volume(stack, spec, nearest=args.nearest,
                                offset_radius=not args.literal_paper_lookup)
    write_volume(volume, args.out)
    if args.export_axial:
        export_axial_slices(volume, args.export_axial)
    print(f"wrote volume {volume.dims} -> {args.out}.json/.raw")
    return 0


def _cmd_stitch(args) -> int:
    with open(args.plan) as f:
        plan_doc = json.load(f)
    frag_paths = args.fragments.split(",")
    entries = plan_doc.get("fragments", [])
    if len(entries) != len(frag_paths):
        print(f"plan lists {len(entries)} fragments, got {len(frag_paths)} images",
              file=sys.stderr)
        return 2
    spacing = float(plan_doc.get("pixel_spacing_mm", 0.1))
    oriented = []
    transforms = []
    for path, entry in zip(frag_paths, entries):
        img = load_image(path)
        img.spacing_mm = (spacing, spacing)
        frag = Fragment(image=img,
                        flip_horizontal=bool(entry.get("flip_horizontal", False)),
                        gross_rotation_deg=float(entry.get("rotation_deg", 0.0)),
                        ink_side=entry.get("ink_side", "none"))
        oriented.append(orient_fragment(frag))
        pairs = [(p["moving_mm"], p["fixed_mm"]) for p in entry.get("landmarks", [])]
        if pairs:
            transforms.append(fit_rigid_landmarks(pairs, allow_scale=bool(
                plan_doc.get("allow_scale", False))))
        else:
            transforms.append(RigidTransform2D())
    canvas = plan_doc["canvas"]
    plan = StitchPlan(transforms=transforms,
                      canvas_size_mm=(float(canvas["width_mm"]), float(canvas["height_mm"])),
                      canvas_spacing_mm=float(canvas.get("spacing_mm", spacing)),
                      background=float(plan_doc.get("background", 1.0)))
    composite = compose_fragments(oriented, transforms, plan)
    save_image(composite, args.out)
    print(f"wrote {args.out} ({composite.width_px}x{composite.height_px} px)")
    return 0


def _registration_config(args) -> RegistrationConfig:
    cfg = RegistrationConfig()
    if getattr(args, "config", None):
        with open(args.config) as f:
            doc = json.load(f)
        cfg = RegistrationConfig(**doc)
    if getattr(args, "literal_paper_schedule", False):
        cfg.schedule = PyramidSchedule(LITERAL_PAPER_SCHEDULE)
    return cfg


def _cmd_register(args) -> int:
    cfg = _registration_config(args)
    spacing = (args.pixel_spacing, args.pixel_spacing)
    mspacing = (args.moving_pixel_spacing or args.pixel_spacing,) * 2
    fixed = load_image(args.fixed)
    fixed.spacing_mm = spacing
    moving = load_image(args.moving)
    moving.spacing_mm = mspacing
    fixed_mask = load_labels(args.fixed_mask)
    fixed_mask.spacing_mm = spacing
    moving_mask = load_labels(args.moving_mask)
    moving_mask.spacing_mm = mspacing

    fmask = fixed_mask.prostate_mask()
    mmask = moving_mask.prostate_mask()
    affine = register_affine(
        Image2D(pixels=fmask.astype(float), spacing_mm=spacing),
        Image2D(pixels=mmask.astype(float), spacing_mm=mspacing), cfg)
    ffd = register_ffd(fixed, moving, fmask, mmask, affine, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    save_transforms(os.path.join(args.out_dir, "transform"), affine=affine, ffd=ffd)
    print(f"wrote {args.out_dir}/transform_affine.json and transform_ffd.json")
    return 0


def _cmd_metrics(args) -> int:
    from .metrics import SliceMetrics, aggregate_case, center_of_mass, dice, hausdorff
    import glob as _glob
    import re as _re

    root = args.case
    with open(os.path.join(root, "microus", "volume.json")) as f:
        sx, sy, _ = json.load(f)["spacing_mm"]
    rows = []
    for wl in sorted(_glob.glob(os.path.join(root, "output", "warped_labels", "h*_m*.png"))):
        m = _re.match(r"h(\d+)_m(\d+)\.png$", os.path.basename(wl))
        if not m:
            continue
        n, k = int(m.group(1)), int(m.group(2))
        fixed = load_labels(os.path.join(root, "masks", "microus", f"slice_{k:03d}.png"))
        warped = load_labels(wl)
        d = dice(fixed.prostate_mask(), warped.prostate_mask())
        hd = hausdorff(fixed.prostate_mask(), warped.prostate_mask(), (sx, sy))
        ud = le = None
        if fixed.mask("urethra").any() and warped.mask("urethra").any():
            a = np.asarray(center_of_mass(fixed.mask("urethra"), (sx, sy)))
            b = np.asarray(center_of_mass(warped.mask("urethra"), (sx, sy)))
            ud = float(np.hypot(*(a - b)))
        if fixed.mask("landmark").any() and warped.mask("landmark").any():
            a = np.asarray(center_of_mass(fixed.mask("landmark"), (sx, sy)))
            b = np.asarray(center_of_mass(warped.mask("landmark"), (sx, sy)))
            le = float(np.hypot(*(a - b)))
        rows.append((SliceMetrics(slice_index=n, dice=d, hausdorff_mm=hd,
                                  urethra_deviation_mm=ud, landmark_error_mm=le), k))
    if not rows:
        print("no warped labels found; run `microfuse pipeline run` first", file=sys.stderr)
        return 2
    report = aggregate_case([r[0] for r in rows])
    write_report(report, args.out, {r[0].slice_index: r[1] for r in rows})
    means = report.means()
    for key in ("dice", "hausdorff_mm", "urethra_deviation_mm", "landmark_error_mm"):
        print(f"{key}: {means[key]}")
    if args.directed:
        print("per-slice directed Hausdorff:")
        for sm, k in rows:
            fixed = load_labels(os.path.join(root, "masks", "microus", f"slice_{k:03d}.png"))
            warped = load_labels(os.path.join(root, "output", "warped_labels",
                                              f"h{sm.slice_index:02d}_m{k:03d}.png"))
            _, dij, dji = hausdorff(fixed.prostate_mask(), warped.prostate_mask(),
                                    (sx, sy), return_directed=True)
            print(f"  slice {sm.slice_index}: fixed->warped {dij:.3f} warped->fixed {dji:.3f}")
    return 0


def _cmd_pipeline_run(args) -> int:
    cfg = PipelineConfig(case_root=args.case, registration=_registration_config(args))
    report = run_case(cfg)
    means = report.means()
    print(f"registered {report.k} slice pairs, {len(report.skipped)} skipped")
    for key in ("dice", "hausdorff_mm", "urethra_deviation_mm", "landmark_error_mm"):
        print(f"  {key}: {means[key]}")
    return 0


def _cmd_phantom(args) -> int:
    from .phantom import PhantomSpec, generate_phantom

    spec = PhantomSpec(seed=args.seed, warp_amplitude_mm=args.warp_amplitude,
                       n_frames=args.n_frames)
    layout = generate_phantom(spec, args.out)
    print(f"phantom case at {layout.root}: {layout.n_micro} micro slices, "
          f"{layout.n_histology} histology slices")
    return 0


def _cmd_serve(args) -> int:
    from .server import serve

    serve(args.root, port=args.port, host=args.host, frontend_dir=args.frontend)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microfuse")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="fan frames -> axial 3D volume")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output base path (writes .json/.raw)")
    p.add_argument("--sigma-i", type=float, default=0.4, dest="sigma_i")
    p.add_argument("--sigma-t", type=float, default=1.0, dest="sigma_t")
    p.add_argument("--nearest", action="store_true", help="nearest-neighbor in-plane sampling")
    p.add_argument("--literal-paper-lookup", action="store_true",
                   help="frame depth lookup ignores the probe radius offset")
    p.add_argument("--export-axial", default=None, help="also export axial PNGs here")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("stitch", help="compose histology fragments into a pseudo-whole-mount")
    p.add_argument("--fragments", required=True, help="comma-separated fragment PNGs")
    p.add_argument("--plan", required=True, help="plan JSON (flips, rotations, landmarks, canvas)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stitch)

    p = sub.add_parser("register", help="two-stage affine + FFD registration of one pair")
    p.add_argument("--fixed", required=True)
    p.add_argument("--moving", required=True)
    p.add_argument("--fixed-mask", required=True, dest="fixed_mask")
    p.add_argument("--moving-mask", required=True, dest="moving_mask")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--config", default=None, help="RegistrationConfig overrides (JSON)")
    p.add_argument("--pixel-spacing", type=float, default=0.4, dest="pixel_spacing")
    p.add_argument("--moving-pixel-spacing", type=float, default=None,
                   dest="moving_pixel_spacing")
    p.add_argument("--literal-paper-schedule", action="store_true",
                   help="verbatim shrink/sigma pairing (4,4),(8,2),(2,1)")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("metrics", help="recompute per-slice metrics from stored outputs")
    p.add_argument("--case", required=True)
    p.add_argument("--out", required=True, help="directory for report.csv/report.json")
    p.add_argument("--directed", action="store_true", help="also print directed Hausdorff")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("pipeline", help="case-level operations")
    psub = p.add_subparsers(dest="pipeline_command", required=True)
    pr = psub.add_parser("run", help="register every corresponded slice of a case")
    pr.add_argument("--case", required=True)
    pr.add_argument("--config", default=None)
    pr.add_argument("--literal-paper-schedule", action="store_true")
    pr.set_defaults(func=_cmd_pipeline_run)

    p = sub.add_parser("phantom", help="generate a synthetic case")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warp-amplitude", type=float, default=3.0, dest="warp_amplitude")
    p.add_argument("--n-frames", type=int, default=240, dest="n_frames")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("serve", help="run the QA HTTP service")
    p.add_argument("--root", required=True, help="directory containing case directories")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--frontend", default=None, help="static frontend directory to mount at /")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
