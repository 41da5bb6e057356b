"""Seeded synthetic prostate cases for desk-scale verification.

A phantom case is a fully populated case directory: a smooth 3D intensity
volume with an ellipsoidal prostate, urethra tube, bright lesions and
per-slice anatomical nodules; fan frames sampled from that volume; pseudo
histology slices cut every 3 mm, deformed by a known smooth warp and
remapped to a different modality (inversion + gamma + noise, rendered in
H&E-like colors); plus masks, labels, landmarks, the slice correspondence,
and the ground-truth warps (under ``truth/``, for evaluation only).

The histology-to-microUS truth mapping for slice n is
``w(q) = q + offset + d(q)`` in slice-image coordinates, where d is a sum of
two Gaussian displacement bumps capped at the configured amplitude.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .imgio import (
    Image2D,
    LabelMap2D,
    LandmarkFile,
    LandmarkPoint,
    Volume3D,
    save_image,
    save_labels,
    save_landmarks,
    write_volume,
)
from .pipeline import CaseLayout, Correspondence, save_correspondence
from .reconstruct import ProbeGeometry, VolumeSpec, axial_slice_frame_offset, sample_fan_frames
from .imgio import save_frame_stack


@dataclass
class PhantomSpec:
    seed: int = 0
    # acquisition geometry
    probe_radius_mm: float = 10.0
    frame_depth_mm: float = 28.0
    frame_width_mm: float = 36.0
    frame_pixel_mm: float = 0.2
    n_frames: int = 240
    sweep_deg: tuple[float, float] = (-90.0, 90.0)
    sigma_i: float = 0.4
    sigma_t: float = 1.0
    # anatomy
    prostate_axes_mm: tuple[float, float, float] = (18.0, 12.0, 13.0)
    urethra_radius_mm: float = 1.6
    lesion_count: int = 2
    lesion_radius_mm: float = 4.0
    # histology simulation
    warp_amplitude_mm: float = 3.0
    gamma: float = 1.6
    invert: bool = True
    noise_sigma: float = 0.02
    histology_spacing_mm: float = 3.0
    histology_pixel_mm: float = 0.15
    margin_mm: float = 8.0

    def __post_init__(self):
        if self.warp_amplitude_mm < 0 or self.noise_sigma < 0:
            raise ValueError("amplitudes must be >= 0")


@dataclass
class _Scene:
    """All random draws for one phantom, made up front for reproducibility."""

    center: tuple[float, float, float]
    axes: tuple[float, float, float]
    blob_centers: np.ndarray
    blob_amps: np.ndarray
    blob_sigmas: np.ndarray
    urethra_xy: tuple[float, float]
    lesion_centers: np.ndarray
    lesion_radii: np.ndarray
    micro_indices: list[int] = field(default_factory=list)  # corresponded micro slices
    nodules: np.ndarray = None  # (K, 3) per corresponded slice
    warps: list[dict] = field(default_factory=list)


def _unit(rng) -> np.ndarray:
    a = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([math.cos(a), math.sin(a)])


def _point_in_ellipsoid(rng, center, axes, shrink: float) -> np.ndarray:
    while True:
        p = rng.uniform(-1.0, 1.0, size=3)
        if (p ** 2).sum() <= 1.0:
            return np.asarray(center) + p * np.asarray(axes) * shrink


def _build_scene(spec: PhantomSpec) -> _Scene:
    rng = np.random.default_rng(spec.seed)
    r, h, w = spec.probe_radius_mm, spec.frame_depth_mm, spec.frame_width_mm
    center = (0.0, r + 0.5 * h, 0.5 * w)
    axes = spec.prostate_axes_mm

    n_blobs = 18
    blob_centers = np.stack(
        [_point_in_ellipsoid(rng, center, axes, 0.9) for _ in range(n_blobs)])
    blob_amps = rng.uniform(0.10, 0.19, size=n_blobs) * rng.choice([-1.0, 1.0], size=n_blobs)
    blob_sigmas = rng.uniform(2.5, 5.5, size=n_blobs)

    urethra_xy = (center[0] + rng.uniform(-2.0, 2.0),
                  center[1] - 0.25 * axes[1] + rng.uniform(-1.0, 1.0))

    lesion_centers = []
    lesion_radii = []
    for _ in range(spec.lesion_count):
        while True:
            p = _point_in_ellipsoid(rng, center, axes, 0.55)
            if math.hypot(p[0] - urethra_xy[0], p[1] - urethra_xy[1]) > 4.0 + spec.urethra_radius_mm:
                break
        lesion_centers.append(p)
        lesion_radii.append(spec.lesion_radius_mm * rng.uniform(0.8, 1.2))
    lesion_centers = np.asarray(lesion_centers).reshape(-1, 3)
    lesion_radii = np.asarray(lesion_radii)

    # corresponded micro slices: every 3 mm through the solid part of the gland
    stride = max(1, int(round(spec.histology_spacing_mm / spec.sigma_t)))
    n_si = math.ceil(w / spec.sigma_t - 1e-9)
    usable = [k for k in range(n_si)
              if abs(k * spec.sigma_t - center[2]) <= 0.66 * axes[2]]
    micro_indices = usable[::stride]

    nodules = []
    warps = []
    for m in micro_indices:
        z = m * spec.sigma_t
        shrink_z = math.sqrt(max(0.0, 1.0 - ((z - center[2]) / axes[2]) ** 2))
        ax2, ay2 = axes[0] * shrink_z, axes[1] * shrink_z
        while True:
            ang = rng.uniform(0.0, 2.0 * math.pi)
            rad = math.sqrt(rng.uniform(0.05, 0.45))
            lx = center[0] + ax2 * rad * math.cos(ang)
            ly = center[1] + ay2 * rad * math.sin(ang)
            if math.hypot(lx - urethra_xy[0], ly - urethra_xy[1]) < 3.5:
                continue
            if lesion_centers.size and np.min(
                    np.hypot(lesion_centers[:, 0] - lx, lesion_centers[:, 1] - ly)) < 4.0:
                continue
            break
        nodules.append((lx, ly, z))

        amp = spec.warp_amplitude_mm
        warps.append({
            "a1": 0.85 * amp, "dir1": _unit(rng).tolist(), "sigma1": 7.0,
            "c1_offset": (2.0 * _unit(rng)).tolist(),
            "a2": 0.5 * amp, "dir2": _unit(rng).tolist(), "sigma2": 10.0,
            "c2_rel": rng.uniform(-0.5, 0.5, size=2).tolist(),
        })

    return _Scene(center=center, axes=axes, blob_centers=blob_centers,
                  blob_amps=blob_amps, blob_sigmas=blob_sigmas,
                  urethra_xy=urethra_xy, lesion_centers=lesion_centers,
                  lesion_radii=lesion_radii, micro_indices=micro_indices,
                  nodules=np.asarray(nodules), warps=warps)


def _field(spec: PhantomSpec, scene: _Scene, x, y, z):
    """Smooth scalar intensity at physical (x, y, z); inputs broadcast."""
    x, y, z = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                                  np.asarray(y, dtype=np.float64),
                                  np.asarray(z, dtype=np.float64))
    cx, cy, cz = scene.center
    ax, ay, az = scene.axes
    bg = 0.18 + 0.06 * np.sin(0.25 * x + 1.3) * np.cos(0.21 * (y - cy) - 0.7) \
        + 0.04 * np.sin(0.18 * z + 0.5)
    q = np.sqrt(((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 + ((z - cz) / az) ** 2)
    wp = 0.5 * (1.0 + np.tanh((1.0 - q) / 0.045))

    tissue = np.full_like(x, 0.52)
    for c, a, s in zip(scene.blob_centers, scene.blob_amps, scene.blob_sigmas):
        d2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        tissue = tissue + a * np.exp(-d2 / (2.0 * s * s))
    ux, uy = scene.urethra_xy
    su = spec.urethra_radius_mm / 1.2
    tissue = tissue - 0.42 * np.exp(-((x - ux) ** 2 + (y - uy) ** 2) / (2.0 * su * su))
    for c, rad in zip(scene.lesion_centers, scene.lesion_radii):
        d2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        s = rad / 1.6
        tissue = tissue + 0.30 * np.exp(-d2 / (2.0 * s * s))
    for c in scene.nodules:
        d2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        tissue = tissue + 0.34 * np.exp(-d2 / (2.0 * 1.8 * 1.8))
    return np.clip(bg * (1.0 - wp) + tissue * wp, 0.01, 0.99)


def _labels_at(spec: PhantomSpec, scene: _Scene, x, y, z_mm: float,
               nodule: np.ndarray | None) -> np.ndarray:
    """Label codes at physical 2D points on the axial plane z = z_mm."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cx, cy, cz = scene.center
    ax, ay, az = scene.axes
    q = np.sqrt(((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 + ((z_mm - cz) / az) ** 2)
    labels = np.zeros(x.shape, dtype=np.uint8)
    inside = q <= 1.0
    labels[inside] = 1
    for c, rad in zip(scene.lesion_centers, scene.lesion_radii):
        d2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z_mm - c[2]) ** 2
        labels[inside & (d2 <= rad * rad)] = 2
    ux, uy = scene.urethra_xy
    labels[inside & (np.hypot(x - ux, y - uy) <= spec.urethra_radius_mm)] = 3
    if nodule is not None:
        labels[inside & (np.hypot(x - nodule[0], y - nodule[1]) <= 1.8)] = 4
    return labels


class _SliceWarp:
    """Truth mapping histology coords -> micro slice coords: w(q) = q + o + d(q)."""

    def __init__(self, offset: np.ndarray, params: dict, scale: float = 1.0):
        self.offset = np.asarray(offset, dtype=np.float64)
        self.params = params
        self.scale = scale
        self.c1 = np.asarray(params["_c1"], dtype=np.float64)
        self.c2 = np.asarray(params["_c2"], dtype=np.float64)

    def displacement(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        p = self.params
        d1 = np.exp(-((q - self.c1) ** 2).sum(axis=-1) / (2.0 * p["sigma1"] ** 2))
        d2 = np.exp(-((q - self.c2) ** 2).sum(axis=-1) / (2.0 * p["sigma2"] ** 2))
        disp = (p["a1"] * d1[..., None] * np.asarray(p["dir1"])
                + p["a2"] * d2[..., None] * np.asarray(p["dir2"]))
        return self.scale * disp

    def forward(self, q: np.ndarray) -> np.ndarray:
        return np.asarray(q, dtype=np.float64) + self.offset + self.displacement(q)

    def inverse(self, p: np.ndarray, iters: int = 60, tol: float = 1e-12) -> np.ndarray:
        target = np.asarray(p, dtype=np.float64) - self.offset
        q = target.copy()
        for _ in range(iters):
            q_next = target - self.displacement(q)
            if np.abs(q_next - q).max() < tol:
                return q_next
            q = q_next
        return q

    def to_dict(self) -> dict:
        return {
            "offset_mm": self.offset.tolist(),
            "scale": self.scale,
            "a1": self.params["a1"], "dir1": self.params["dir1"],
            "sigma1": self.params["sigma1"], "c1_mm": self.c1.tolist(),
            "a2": self.params["a2"], "dir2": self.params["dir2"],
            "sigma2": self.params["sigma2"], "c2_mm": self.c2.tolist(),
        }


def _hne_colorize(v: np.ndarray) -> np.ndarray:
    """Map scalar [0,1] to an H&E-like pink-to-purple ramp."""
    light = np.array([0.95, 0.80, 0.85])
    dark = np.array([0.45, 0.20, 0.50])
    return (1.0 - v[..., None]) * light + v[..., None] * dark


def generate_phantom(spec: PhantomSpec, out_dir) -> CaseLayout:
    """Write a complete synthetic case; identical seeds give identical bytes."""
    out_dir = os.fspath(out_dir)
    scene = _build_scene(spec)
    geom = ProbeGeometry(
        probe_radius_mm=spec.probe_radius_mm,
        frame_height_mm=spec.frame_depth_mm,
        frame_width_mm=spec.frame_width_mm,
        pixel_spacing_mm=spec.frame_pixel_mm,
    )
    vspec = VolumeSpec(sigma_i=spec.sigma_i, sigma_t=spec.sigma_t)
    n_lr, n_pa, n_si = vspec.dims(geom)
    reach = geom.frame_height_mm + geom.probe_radius_mm

    # ground-truth volume on the reconstruction grid
    xs = spec.sigma_i * np.arange(n_lr) - reach
    ys = spec.sigma_i * np.arange(n_pa)
    zs = spec.sigma_t * np.arange(n_si)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    volume = Volume3D(
        voxels=_field(spec, scene, gx, gy, gz).astype(np.float32),
        spacing_mm=(spec.sigma_i, spec.sigma_i, spec.sigma_t),
        origin_mm=(-reach, 0.0, 0.0),
    )

    micro_dir = os.path.join(out_dir, "microus")
    os.makedirs(micro_dir, exist_ok=True)
    write_volume(volume, os.path.join(micro_dir, "volume"))

    # oblique fan frames via the inverse sampler
    angles = np.linspace(spec.sweep_deg[0], spec.sweep_deg[1], spec.n_frames)
    stack = sample_fan_frames(volume, angles, geom)
    quant = np.rint(np.clip(stack.frames, 0.0, 1.0) * 255.0) / 255.0
    stack.frames = quant.astype(np.float32)
    save_frame_stack(stack, micro_dir)

    off_x, off_y = axial_slice_frame_offset(volume)

    # micro-US label maps on the axial export grid, for every gland slice
    masks_micro = os.path.join(out_dir, "masks", "microus")
    os.makedirs(masks_micro, exist_ok=True)
    cols, rows = np.meshgrid(np.arange(n_lr), np.arange(n_pa))
    sx_img = (cols + 0.5) * spec.sigma_i  # slice-image coords
    sy_img = (rows + 0.5) * spec.sigma_i
    x_phys = sx_img - off_x
    y_phys = sy_img - off_y
    nodule_by_micro = {m: scene.nodules[i] for i, m in enumerate(scene.micro_indices)}
    cz, az = scene.center[2], scene.axes[2]
    for k in range(n_si):
        z = k * spec.sigma_t
        if abs(z - cz) >= az:
            continue
        labels = _labels_at(spec, scene, x_phys, y_phys, z, nodule_by_micro.get(k))
        if not labels.any():
            continue
        save_labels(LabelMap2D(labels=labels, spacing_mm=(spec.sigma_i, spec.sigma_i)),
                    os.path.join(masks_micro, f"slice_{k:03d}.png"))

    # pseudo-histology slices: warped, modality-remapped renderings
    hist_dir = os.path.join(out_dir, "histology")
    masks_hist = os.path.join(out_dir, "masks", "histology")
    truth_dir = os.path.join(out_dir, "truth")
    for d in (hist_dir, masks_hist, truth_dir):
        os.makedirs(d, exist_ok=True)

    noise_rng = np.random.default_rng(spec.seed + 7919)
    micro_points = []
    hist_points = []
    warp_records = {}
    hp = spec.histology_pixel_mm
    for n, m in enumerate(scene.micro_indices):
        z = m * spec.sigma_t
        shrink_z = math.sqrt(max(0.0, 1.0 - ((z - cz) / az) ** 2))
        ax2 = scene.axes[0] * shrink_z
        ay2 = scene.axes[1] * shrink_z
        ctr_img = np.array([scene.center[0] + off_x, scene.center[1] + off_y])
        offset = np.array([ctr_img[0] - ax2 - spec.margin_mm,
                           ctr_img[1] - ay2 - spec.margin_mm])
        cw = 2.0 * (ax2 + spec.margin_mm)
        chh = 2.0 * (ay2 + spec.margin_mm)
        nwpx = int(math.ceil(cw / hp))
        nhpx = int(math.ceil(chh / hp))

        params = dict(scene.warps[n])
        lm = nodule_by_micro[m]
        lm_img = np.array([lm[0] + off_x, lm[1] + off_y])
        params["_c1"] = (lm_img - offset) + np.asarray(params["c1_offset"])
        params["_c2"] = (ctr_img - offset) + np.asarray(params["c2_rel"]) * np.array([ax2, ay2])
        warp = _SliceWarp(offset, params)

        # cap the field at the configured amplitude
        probe_cols, probe_rows = np.meshgrid(np.arange(0, nwpx, 2), np.arange(0, nhpx, 2))
        probe = np.stack([(probe_cols.ravel() + 0.5) * hp,
                          (probe_rows.ravel() + 0.5) * hp], axis=1)
        dmax = float(np.hypot(*warp.displacement(probe).T).max())
        if dmax > spec.warp_amplitude_mm > 0:
            warp.scale = spec.warp_amplitude_mm / dmax

        ccols, crows = np.meshgrid(np.arange(nwpx), np.arange(nhpx))
        q = np.stack([(ccols.ravel() + 0.5) * hp, (crows.ravel() + 0.5) * hp], axis=1)
        p_img = warp.forward(q)
        xw = p_img[:, 0] - off_x
        yw = p_img[:, 1] - off_y
        v = _field(spec, scene, xw, yw, np.full_like(xw, z)).reshape(nhpx, nwpx)
        if spec.invert:
            v = 1.0 - v
        v = np.clip(v, 0.0, 1.0) ** spec.gamma
        v = np.clip(v + noise_rng.normal(0.0, spec.noise_sigma, v.shape), 0.0, 1.0)
        rgb = _hne_colorize(v)
        save_image(Image2D(pixels=rgb, spacing_mm=(hp, hp)),
                   os.path.join(hist_dir, f"slice_{n:02d}.png"))

        hlabels = _labels_at(spec, scene, xw, yw, z, nodule_by_micro[m]).reshape(nhpx, nwpx)
        save_labels(LabelMap2D(labels=hlabels, spacing_mm=(hp, hp)),
                    os.path.join(masks_hist, f"slice_{n:02d}.png"))

        lm_hist = warp.inverse(lm_img)
        micro_points.append(LandmarkPoint(
            name=f"nodule_{n}", role="anatomical-landmark", slice=m,
            x_mm=float(lm_img[0]), y_mm=float(lm_img[1])))
        hist_points.append(LandmarkPoint(
            name=f"nodule_{n}", role="anatomical-landmark", slice=n,
            x_mm=float(lm_hist[0]), y_mm=float(lm_hist[1])))
        ur_img = np.array([scene.urethra_xy[0] + off_x, scene.urethra_xy[1] + off_y])
        ur_hist = warp.inverse(ur_img)
        micro_points.append(LandmarkPoint(
            name=f"urethra_{n}", role="urethra-centroid", slice=m,
            x_mm=float(ur_img[0]), y_mm=float(ur_img[1])))
        hist_points.append(LandmarkPoint(
            name=f"urethra_{n}", role="urethra-centroid", slice=n,
            x_mm=float(ur_hist[0]), y_mm=float(ur_hist[1])))
        warp_records[str(n)] = warp.to_dict()

    lm_dir = os.path.join(out_dir, "landmarks")
    os.makedirs(lm_dir, exist_ok=True)
    save_landmarks(LandmarkFile(points=micro_points), os.path.join(lm_dir, "microus.json"))
    save_landmarks(LandmarkFile(points=hist_points), os.path.join(lm_dir, "histology.json"))

    with open(os.path.join(hist_dir, "meta.json"), "w") as f:
        json.dump({"pixel_spacing_mm": hp}, f, indent=2)
        f.write("\n")
    with open(os.path.join(truth_dir, "warps.json"), "w") as f:
        json.dump(warp_records, f, indent=2)
        f.write("\n")

    corr = Correspondence(
        anchor=(0, scene.micro_indices[0]),
        histology_spacing_mm=spec.histology_spacing_mm,
        microus_spacing_mm=spec.sigma_t,
    )
    save_correspondence(corr, os.path.join(out_dir, "correspondence.json"))

    return CaseLayout(
        root=out_dir,
        n_micro=n_si,
        n_histology=len(scene.micro_indices),
        correspondence=corr,
    )
