"""Case orchestration: correspondence propagation, per-slice registration,
label mapping, overlays, and report emission.

Case directory layout (fixed):
    microus/manifest.json, microus/frames/*.png
    microus/volume.{json,raw}            (generated if absent)
    microus/axial/slice_###.png          (generated)
    histology/slice_##.png  [+ meta.json with pixel_spacing_mm]
    masks/microus/slice_###.png, masks/histology/slice_##.png
    landmarks/*.json
    correspondence.json
    output/{transforms,overlays,warped_labels,report.csv,report.json}
"""

from __future__ import annotations

import glob
import json
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion

from .imgio import (
    Image2D,
    LabelMap2D,
    ValidationError,
    load_frame_stack,
    load_image,
    load_labels,
    load_landmarks,
    export_axial_slices,
    read_volume,
    save_image,
    save_labels,
    write_volume,
)
from .metrics import (
    CaseReport,
    SliceMetrics,
    aggregate_case,
    center_of_mass,
    dice,
    hausdorff,
)
from .reconstruct import VolumeSpec, reconstruct_volume
from .register import RegistrationConfig, register_affine, register_ffd
from .transforms import ComposedTransform2D, invert_points, save_transforms, warp_labels

OVERLAY_CANCER = np.array([1.0, 0.55, 0.0])
OVERLAY_PROSTATE = np.array([0.15, 0.35, 1.0])
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class Correspondence:
    """Single anchor pair plus the inter-slice spacings that derive the rest."""

    anchor: tuple[int, int]  # (histology index, micro-US axial index)
    histology_spacing_mm: float = 3.0
    microus_spacing_mm: float = 1.0

    def __post_init__(self):
        self.anchor = (int(self.anchor[0]), int(self.anchor[1]))
        if self.histology_spacing_mm <= 0 or self.microus_spacing_mm <= 0:
            raise ValidationError("slice spacings must be > 0")

    def micro_index_for(self, histology_index: int) -> float:
        ratio = self.histology_spacing_mm / self.microus_spacing_mm
        return self.anchor[1] + ratio * (histology_index - self.anchor[0])


def propagate_correspondence(corr: Correspondence, n_histology: int,
                             n_micro: int) -> tuple[list[tuple[int, int]], list[dict]]:
    """Derive the full histology->micro mapping from the anchor pair.

    Micro indices round to nearest; exact ties round toward the anchor.
    Out-of-range targets are dropped with a reason.
    """
    h0, m0 = corr.anchor
    if not (0 <= h0 < n_histology):
        raise ValidationError(f"anchor histology index {h0} outside [0, {n_histology})")
    if not (0 <= m0 < n_micro):
        raise ValidationError(f"anchor micro index {m0} outside [0, {n_micro})")
    pairs = []
    dropped = []
    for n in range(n_histology):
        d = corr.micro_index_for(n)
        lo = math.floor(d)
        frac = d - lo
        if abs(frac - 0.5) < 1e-9:
            m = lo if d > m0 else lo + 1  # tie: round toward the anchor
        else:
            m = int(round(d))
        if 0 <= m < n_micro:
            pairs.append((n, m))
        else:
            dropped.append({"slice": n, "micro_slice": m, "reason": "out of micro range"})
    return pairs, dropped


def load_correspondence(path) -> Correspondence:
    with open(os.fspath(path)) as f:
        d = json.load(f)
    return Correspondence(
        anchor=tuple(int(v) for v in d["anchor"]),
        histology_spacing_mm=float(d.get("histology_spacing_mm", 3.0)),
        microus_spacing_mm=float(d.get("microus_spacing_mm", 1.0)),
    )


def save_correspondence(corr: Correspondence, path) -> None:
    """Atomic write: readers never observe a half-written file."""
    path = os.fspath(path)
    payload = {
        "anchor": list(corr.anchor),
        "histology_spacing_mm": corr.histology_spacing_mm,
        "microus_spacing_mm": corr.microus_spacing_mm,
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    os.replace(tmp, path)


@dataclass
class CaseLayout:
    root: str
    n_micro: int
    n_histology: int
    correspondence: Correspondence | None = None


@dataclass
class PipelineConfig:
    case_root: str
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    volume_spec: VolumeSpec = field(default_factory=VolumeSpec)
    overlay_opacity: float = 0.5
    recon_nearest: bool = False
    recon_offset_radius: bool = True
    histology_pixel_mm: float = 0.15  # fallback when histology/meta.json is absent

    def __post_init__(self):
        if not (0.0 <= self.overlay_opacity <= 1.0):
            raise ValidationError("overlay opacity must be in [0, 1]")


def _case_paths(root: str) -> dict:
    return {
        "manifest": os.path.join(root, "microus", "manifest.json"),
        "volume": os.path.join(root, "microus", "volume"),
        "axial": os.path.join(root, "microus", "axial"),
        "histology": os.path.join(root, "histology"),
        "masks_micro": os.path.join(root, "masks", "microus"),
        "masks_hist": os.path.join(root, "masks", "histology"),
        "correspondence": os.path.join(root, "correspondence.json"),
        "output": os.path.join(root, "output"),
    }


def histology_indices(root: str) -> list[int]:
    files = glob.glob(os.path.join(root, "histology", "slice_*.png"))
    out = []
    for f in files:
        m = re.match(r"slice_(\d+)\.png$", os.path.basename(f))
        if m:
            out.append(int(m.group(1)))
    return sorted(out)


def histology_pixel_spacing(root: str, fallback: float) -> float:
    meta = os.path.join(root, "histology", "meta.json")
    if os.path.exists(meta):
        with open(meta) as f:
            return float(json.load(f)["pixel_spacing_mm"])
    return fallback


def prepare_case(cfg: PipelineConfig):
    """Reconstruct (or load) the volume and export axial slices if missing."""
    paths = _case_paths(cfg.case_root)
    if os.path.exists(paths["volume"] + ".json"):
        volume = read_volume(paths["volume"])
    else:
        stack = load_frame_stack(paths["manifest"])
        volume = reconstruct_volume(stack, cfg.volume_spec,
                                    nearest=cfg.recon_nearest,
                                    offset_radius=cfg.recon_offset_radius)
        write_volume(volume, paths["volume"])
    n_si = volume.dims[2]
    existing = glob.glob(os.path.join(paths["axial"], "slice_*.png"))
    if len(existing) != n_si:
        export_axial_slices(volume, paths["axial"])
    return volume


def _boundary(mask: np.ndarray) -> np.ndarray:
    return mask & ~binary_erosion(mask, structure=_CROSS, border_value=0)


def render_overlay(base: Image2D, fixed_labels: LabelMap2D,
                   warped_labels: LabelMap2D, opacity: float) -> Image2D:
    """Axial slice with the fixed prostate contour (blue) and the mapped
    cancer region (orange) alpha-blended at the given opacity."""
    rgb = np.repeat(base.gray()[:, :, None], 3, axis=2)
    cancer = warped_labels.mask("cancer")
    contour = _boundary(fixed_labels.prostate_mask())
    for mask, color in ((cancer, OVERLAY_CANCER), (contour, OVERLAY_PROSTATE)):
        if mask.any():
            rgb[mask] = (1.0 - opacity) * rgb[mask] + opacity * color
    return Image2D(pixels=rgb, spacing_mm=base.spacing_mm)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_report(report: CaseReport, out_dir: str,
                 pair_lookup: dict[int, int]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w") as f:
        f.write("slice,dice,hd_mm,ud_mm,le_mm\n")
        for s in report.slices:
            f.write(f"{s.slice_index},{_fmt(s.dice)},{_fmt(s.hausdorff_mm)},"
                    f"{_fmt(s.urethra_deviation_mm)},{_fmt(s.landmark_error_mm)}\n")
    payload = {
        "k": report.k,
        "means": report.means(),
        "skipped": report.skipped,
        "slices": [
            {
                "slice": s.slice_index,
                "micro_slice": pair_lookup.get(s.slice_index),
                "dice": s.dice,
                "hd_mm": s.hausdorff_mm,
                "ud_mm": s.urethra_deviation_mm,
                "le_mm": s.landmark_error_mm,
            }
            for s in report.slices
        ],
    }
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def read_report_csv(path) -> list[dict]:
    rows = []
    with open(os.fspath(path)) as f:
        header = f.readline().strip().split(",")
        for line in f:
            vals = line.rstrip("\n").split(",")
            row = dict(zip(header, vals))
            rows.append({k: (float(v) if k != "slice" and v != "" else
                             (int(v) if k == "slice" else None))
                         for k, v in row.items()})
    return rows


def run_case(cfg: PipelineConfig) -> CaseReport:
    """Register every corresponded slice pair and write all case outputs.

    Pure function of the case directory content and config: identical inputs
    produce bitwise-identical transforms, overlays and reports.
    """
    root = cfg.case_root
    paths = _case_paths(root)
    volume = prepare_case(cfg)
    n_micro = volume.dims[2]
    sx, sy, _ = volume.spacing_mm

    hist_idx = histology_indices(root)
    if not hist_idx:
        raise ValidationError(f"case has no histology slices: {root}")
    n_hist = max(hist_idx) + 1
    if not os.path.exists(paths["correspondence"]):
        raise ValidationError(f"missing correspondence.json in {root}")
    corr = load_correspondence(paths["correspondence"])
    pairs, dropped = propagate_correspondence(corr, n_hist, n_micro)
    if not pairs:
        raise ValidationError("no corresponded slice pairs in range")

    hp = histology_pixel_spacing(root, cfg.histology_pixel_mm)
    lm_micro = lm_hist = None
    lm_micro_path = os.path.join(root, "landmarks", "microus.json")
    lm_hist_path = os.path.join(root, "landmarks", "histology.json")
    if os.path.exists(lm_micro_path) and os.path.exists(lm_hist_path):
        lm_micro = load_landmarks(lm_micro_path)
        lm_hist = load_landmarks(lm_hist_path)
    out = paths["output"]
    tdir = os.path.join(out, "transforms")
    odir = os.path.join(out, "overlays")
    wdir = os.path.join(out, "warped_labels")
    for d in (out, tdir, odir, wdir):
        os.makedirs(d, exist_ok=True)

    slices = []
    skipped = list(dropped)
    pair_lookup = {}
    for n, m in pairs:
        hist_img_path = os.path.join(paths["histology"], f"slice_{n:02d}.png")
        hist_mask_path = os.path.join(paths["masks_hist"], f"slice_{n:02d}.png")
        micro_mask_path = os.path.join(paths["masks_micro"], f"slice_{m:03d}.png")
        axial_path = os.path.join(paths["axial"], f"slice_{m:03d}.png")
        missing = [p for p in (hist_img_path, hist_mask_path, micro_mask_path, axial_path)
                   if not os.path.exists(p)]
        if missing:
            skipped.append({"slice": n, "micro_slice": m,
                            "reason": f"missing {os.path.basename(missing[0])}"})
            continue

        fixed_img = load_image(axial_path)
        fixed_img.spacing_mm = (sx, sy)
        fixed_labels = load_labels(micro_mask_path)
        fixed_labels.spacing_mm = (sx, sy)
        moving_img = load_image(hist_img_path)
        moving_img.spacing_mm = (hp, hp)
        moving_labels = load_labels(hist_mask_path)
        moving_labels.spacing_mm = (hp, hp)

        fixed_pmask = fixed_labels.prostate_mask()
        moving_pmask = moving_labels.prostate_mask()
        affine = register_affine(
            Image2D(pixels=fixed_pmask.astype(np.float64), spacing_mm=(sx, sy)),
            Image2D(pixels=moving_pmask.astype(np.float64), spacing_mm=(hp, hp)),
            cfg.registration)
        ffd = register_ffd(fixed_img, moving_img, fixed_pmask, moving_pmask,
                           affine, cfg.registration)
        composed = ComposedTransform2D(affine, ffd)
        save_transforms(os.path.join(tdir, f"h{n:02d}"), affine=affine, ffd=ffd)

        warped = warp_labels(moving_labels, composed, fixed_labels)
        save_labels(warped, os.path.join(wdir, f"h{n:02d}_m{m:03d}.png"))

        d = dice(fixed_pmask, warped.prostate_mask())
        hd = hausdorff(fixed_pmask, warped.prostate_mask(), (sx, sy))
        ud = None
        if fixed_labels.mask("urethra").any() and warped.mask("urethra").any():
            ud = float(np.hypot(*(np.asarray(center_of_mass(fixed_labels.mask("urethra"), (sx, sy)))
                                  - np.asarray(center_of_mass(warped.mask("urethra"), (sx, sy))))))
        # landmark error from the picked point coordinates when available;
        # otherwise from warped landmark-label centroids
        le = None
        pm = lm_micro.for_slice(m, "anatomical-landmark") if lm_micro else []
        ph = lm_hist.for_slice(n, "anatomical-landmark") if lm_hist else []
        if pm and ph:
            mapped = invert_points(composed, np.array([[ph[0].x_mm, ph[0].y_mm]]))[0]
            le = float(np.hypot(mapped[0] - pm[0].x_mm, mapped[1] - pm[0].y_mm))
        elif fixed_labels.mask("landmark").any() and warped.mask("landmark").any():
            le = float(np.hypot(*(np.asarray(center_of_mass(fixed_labels.mask("landmark"), (sx, sy)))
                                  - np.asarray(center_of_mass(warped.mask("landmark"), (sx, sy))))))
        slices.append(SliceMetrics(slice_index=n, dice=d, hausdorff_mm=hd,
                                   urethra_deviation_mm=ud, landmark_error_mm=le))
        pair_lookup[n] = m

        overlay = render_overlay(fixed_img, fixed_labels, warped, cfg.overlay_opacity)
        save_image(overlay, os.path.join(odir, f"h{n:02d}.png"))

    if not slices:
        raise ValidationError("no slice pair could be registered")
    report = aggregate_case(slices, skipped)
    write_report(report, out, pair_lookup)
    return report
