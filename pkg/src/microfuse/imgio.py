"""Data model and bit-exact file I/O for images, volumes, masks and landmarks.

Conventions used throughout the package:

* 2D images: pixel (row, col) has its center at physical
  ``((col + 0.5) * sx, (row + 0.5) * sy)`` mm, so an image of ``W x H``
  pixels spans exactly ``W*sx x H*sy`` mm edge to edge.
* 3D volumes: voxel (ix, iy, iz) has its center at
  ``origin_mm + (ix*sx, iy*sy, iz*sz)``; ``origin_mm`` is the physical
  coordinate of voxel (0, 0, 0).
* Volumes are serialized as a JSON header plus a little-endian float32
  raw payload in x-fastest order; round trips are bitwise exact.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

# 8-bit PNG palette for label maps (bit-exact contract).
LABEL_CODES = {"background": 0, "prostate": 1, "cancer": 2, "urethra": 3, "landmark": 4}
CODE_TO_PNG = np.array([0, 85, 170, 255, 51], dtype=np.uint8)
PNG_TO_CODE = {0: 0, 85: 1, 170: 2, 255: 3, 51: 4}


class ValidationError(ValueError):
    """Input violates a declared invariant."""


class FormatError(ValueError):
    """File content does not match the declared on-disk format."""


@dataclass
class Image2D:
    """Grayscale or RGB image with physical pixel spacing in mm."""

    pixels: np.ndarray  # (H, W) grayscale or (H, W, 3) RGB, float in [0, 1]
    spacing_mm: tuple[float, float] = (1.0, 1.0)  # (sx, sy) = (col, row) spacing

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim not in (2, 3) or (self.pixels.ndim == 3 and self.pixels.shape[2] != 3):
            raise ValidationError(f"expected (H,W) or (H,W,3) pixels, got {self.pixels.shape}")
        if self.pixels.size == 0:
            raise ValidationError("empty image")
        sx, sy = self.spacing_mm
        if not (sx > 0 and sy > 0):
            raise ValidationError(f"spacing must be strictly positive, got {self.spacing_mm}")
        if not np.isfinite(self.pixels).all():
            raise ValidationError("non-finite pixel intensities")

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]

    @property
    def is_rgb(self) -> bool:
        return self.pixels.ndim == 3

    def gray(self) -> np.ndarray:
        """Scalar intensities; RGB is reduced with Rec.601 luma weights."""
        if self.is_rgb:
            return self.pixels @ np.array([0.299, 0.587, 0.114])
        return self.pixels


@dataclass
class LabelMap2D:
    """Small-integer label image on the same grid convention as Image2D."""

    labels: np.ndarray  # (H, W) uint8 codes from LABEL_CODES
    spacing_mm: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.ndim != 2 or self.labels.size == 0:
            raise ValidationError(f"expected nonempty (H,W) labels, got {self.labels.shape}")
        sx, sy = self.spacing_mm
        if not (sx > 0 and sy > 0):
            raise ValidationError(f"spacing must be strictly positive, got {self.spacing_mm}")
        bad = set(np.unique(self.labels)) - set(LABEL_CODES.values())
        if bad:
            raise ValidationError(f"unknown label codes {sorted(bad)}")

    @property
    def height_px(self) -> int:
        return self.labels.shape[0]

    @property
    def width_px(self) -> int:
        return self.labels.shape[1]

    def mask(self, name: str) -> np.ndarray:
        """Boolean mask for one label name."""
        return self.labels == LABEL_CODES[name]

    def prostate_mask(self) -> np.ndarray:
        """Whole-gland mask: prostate plus structures annotated inside it."""
        return self.labels != 0


@dataclass
class Volume3D:
    """Axial voxel grid with physical spacing and origin."""

    voxels: np.ndarray  # (Nx, Ny, Nz) float32
    spacing_mm: tuple[float, float, float]
    origin_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        if self.voxels.ndim != 3 or self.voxels.size == 0:
            raise ValidationError(f"expected nonempty (Nx,Ny,Nz) voxels, got {self.voxels.shape}")
        if not all(s > 0 for s in self.spacing_mm):
            raise ValidationError(f"spacing must be strictly positive, got {self.spacing_mm}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape


@dataclass
class FrameStack:
    """Ordered 2D fan frames with per-frame rotation angles and probe geometry."""

    frames: np.ndarray  # (F, H, W) float32, row 0 = top of frame
    angles_deg: np.ndarray  # (F,) sorted non-decreasing, in [-90, 90]
    probe_radius_mm: float
    pixel_spacing_mm: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.angles_deg = np.asarray(self.angles_deg, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] == 0:
            raise ValidationError(f"expected (F,H,W) frames, got {self.frames.shape}")
        if self.angles_deg.shape != (self.frames.shape[0],):
            raise ValidationError(
                f"{self.frames.shape[0]} frames but {self.angles_deg.size} angles"
            )
        if np.any(self.angles_deg < -90.0) or np.any(self.angles_deg > 90.0):
            raise ValidationError("frame angle outside [-90, 90] degrees")
        if np.any(np.diff(self.angles_deg) < 0):
            raise ValidationError("angles must be sorted non-decreasing")
        if self.probe_radius_mm < 0:
            raise ValidationError("probe radius must be >= 0")
        if self.pixel_spacing_mm <= 0:
            raise ValidationError("pixel spacing must be > 0")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_height_mm(self) -> float:
        return self.frames.shape[1] * self.pixel_spacing_mm

    @property
    def frame_width_mm(self) -> float:
        return self.frames.shape[2] * self.pixel_spacing_mm


@dataclass
class LandmarkPoint:
    """Named 2D point in physical mm, tagged with slice index and role."""

    name: str
    role: str  # urethra-centroid | anatomical-landmark | stitch-landmark
    slice: int
    x_mm: float
    y_mm: float

    def __post_init__(self):
        if not (math.isfinite(self.x_mm) and math.isfinite(self.y_mm)):
            raise ValidationError(f"non-finite landmark coordinates for {self.name!r}")


@dataclass
class LandmarkFile:
    points: list[LandmarkPoint] = field(default_factory=list)

    def for_slice(self, index: int, role: str | None = None) -> list[LandmarkPoint]:
        out = [p for p in self.points if p.slice == index]
        if role is not None:
            out = [p for p in out if p.role == role]
        return out


# ---------------------------------------------------------------------------
# PNG image / label I/O


def load_image(path) -> Image2D:
    """Load an 8/16-bit grayscale or 8-bit RGB PNG, normalized to [0, 1]."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"image file not found: {path}")
    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        elif im.mode in ("I;16", "I"):
            arr = np.asarray(im, dtype=np.float64)
            if im.mode == "I" and arr.max() > 65535:
                raise FormatError(f"unsupported bit depth in {path}")
            arr = arr / 65535.0
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        elif im.mode == "RGBA":
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        else:
            raise FormatError(f"unsupported PNG mode {im.mode!r} in {path}")
    return Image2D(pixels=arr)


def save_image(img: Image2D, path, bit_depth: int = 8) -> None:
    """Write an Image2D as PNG; values are clipped to [0, 1] then quantized."""
    arr = np.clip(img.pixels, 0.0, 1.0)
    if bit_depth == 8:
        data = np.rint(arr * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        if img.is_rgb:
            raise ValidationError("16-bit RGB PNGs are not supported")
        data = np.rint(arr * 65535.0).astype(np.uint16)
    else:
        raise ValidationError(f"unsupported bit depth {bit_depth}")
    PILImage.fromarray(data).save(os.fspath(path))


def load_labels(path) -> LabelMap2D:
    """Load a label PNG using the exact 8-bit palette mapping."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"label file not found: {path}")
    with PILImage.open(path) as im:
        if im.mode != "L":
            raise FormatError(f"label PNGs must be 8-bit grayscale, got mode {im.mode!r}")
        raw = np.asarray(im, dtype=np.uint8)
    codes = np.zeros_like(raw)
    known = np.zeros(raw.shape, dtype=bool)
    for png_val, code in PNG_TO_CODE.items():
        hit = raw == png_val
        codes[hit] = code
        known |= hit
    if not known.all():
        bad = sorted(set(np.unique(raw[~known])))
        raise ValidationError(f"unknown label pixel values {bad} in {path}")
    return LabelMap2D(labels=codes)


def save_labels(labels: LabelMap2D, path) -> None:
    PILImage.fromarray(CODE_TO_PNG[labels.labels], mode="L").save(os.fspath(path))


# ---------------------------------------------------------------------------
# Volume I/O: JSON header + raw little-endian f32 payload, x-fastest


def _volume_paths(base_path) -> tuple[str, str]:
    base = os.fspath(base_path)
    if base.endswith(".json"):
        base = base[: -len(".json")]
    return base + ".json", base + ".raw"


def write_volume(v: Volume3D, base_path) -> None:
    header_path, raw_path = _volume_paths(base_path)
    nx, ny, nz = v.dims
    header = {
        "dims": [nx, ny, nz],
        "spacing_mm": list(v.spacing_mm),
        "origin_mm": list(v.origin_mm),
        "dtype": "f32le",
        "order": "x-fastest",
    }
    with open(header_path, "w") as f:
        json.dump(header, f, indent=2)
        f.write("\n")
    payload = np.ascontiguousarray(v.voxels.ravel(order="F"), dtype="<f4")
    with open(raw_path, "wb") as f:
        f.write(payload.tobytes())


def read_volume(base_path) -> Volume3D:
    header_path, raw_path = _volume_paths(base_path)
    for p in (header_path, raw_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"volume file not found: {p}")
    with open(header_path) as f:
        header = json.load(f)
    if header.get("dtype") != "f32le" or header.get("order") != "x-fastest":
        raise FormatError(f"unsupported volume encoding in {header_path}")
    nx, ny, nz = (int(d) for d in header["dims"])
    expected = nx * ny * nz * 4
    raw = open(raw_path, "rb").read()
    if len(raw) != expected:
        raise FormatError(
            f"payload size mismatch in {raw_path}: expected {expected} bytes, got {len(raw)}"
        )
    voxels = np.frombuffer(raw, dtype="<f4").reshape((nx, ny, nz), order="F")
    return Volume3D(
        voxels=voxels.copy(),
        spacing_mm=tuple(float(s) for s in header["spacing_mm"]),
        origin_mm=tuple(float(o) for o in header["origin_mm"]),
    )


def export_axial_slices(v: Volume3D, out_dir) -> list[str]:
    """Write one window-normalized 8-bit PNG per z index.

    The window is the global [min, max] of the whole volume so that slices
    are mutually comparable; a constant volume maps to mid-gray 0.5.
    Slice pixel (row=j, col=i) holds voxel (i, j, k): columns run along x
    and rows along y of the volume.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    lo = float(v.voxels.min())
    hi = float(v.voxels.max())
    sx, sy, _ = v.spacing_mm
    paths = []
    for k in range(v.dims[2]):
        plane = v.voxels[:, :, k].T.astype(np.float64)  # (Ny, Nx)
        if hi > lo:
            plane = (plane - lo) / (hi - lo)
        else:
            plane = np.full_like(plane, 0.5)
        path = os.path.join(out_dir, f"slice_{k:03d}.png")
        save_image(Image2D(pixels=plane, spacing_mm=(sx, sy)), path)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Frame manifest I/O


def load_frame_stack(manifest_path) -> FrameStack:
    """Load a frame manifest and its referenced PNG frames.

    Manifest schema: ``{probe_radius_mm, pixel_spacing_mm, frame_width_px,
    frame_height_px, frames: [{file, angle_deg}]}``. Frames are sorted by
    angle on load; file paths are resolved relative to the manifest.
    """
    manifest_path = os.fspath(manifest_path)
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    try:
        radius = float(manifest["probe_radius_mm"])
        spacing = float(manifest["pixel_spacing_mm"])
        width_px = int(manifest["frame_width_px"])
        height_px = int(manifest["frame_height_px"])
        entries = manifest["frames"]
    except KeyError as e:
        raise FormatError(f"manifest missing field {e} in {manifest_path}") from e
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"manifest lists no frames: {manifest_path}")
    for entry in entries:
        if "file" not in entry or "angle_deg" not in entry:
            raise FormatError(f"frame entry missing file/angle_deg in {manifest_path}")

    base = os.path.dirname(manifest_path)
    entries = sorted(entries, key=lambda e: float(e["angle_deg"]))
    angles = np.array([float(e["angle_deg"]) for e in entries])
    if np.any(angles < -90.0) or np.any(angles > 90.0):
        raise ValidationError(f"frame angle outside [-90, 90] in {manifest_path}")

    frames = np.empty((len(entries), height_px, width_px), dtype=np.float32)
    for i, entry in enumerate(entries):
        img = load_image(os.path.join(base, entry["file"]))
        if img.is_rgb:
            raise FormatError(f"fan frames must be grayscale: {entry['file']}")
        if img.pixels.shape != (height_px, width_px):
            raise ValidationError(
                f"frame {entry['file']} is {img.pixels.shape}, manifest declares "
                f"({height_px}, {width_px})"
            )
        frames[i] = img.pixels
    return FrameStack(
        frames=frames,
        angles_deg=angles,
        probe_radius_mm=radius,
        pixel_spacing_mm=spacing,
    )


def save_frame_stack(stack: FrameStack, out_dir, manifest_name: str = "manifest.json") -> str:
    """Write frames as 8-bit PNGs plus a manifest; inverse of load_frame_stack."""
    out_dir = os.fspath(out_dir)
    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    entries = []
    for i in range(stack.n_frames):
        name = f"frame_{i:04d}.png"
        save_image(
            Image2D(pixels=stack.frames[i].astype(np.float64),
                    spacing_mm=(stack.pixel_spacing_mm, stack.pixel_spacing_mm)),
            os.path.join(frames_dir, name),
        )
        entries.append({"file": f"frames/{name}", "angle_deg": float(stack.angles_deg[i])})
    manifest = {
        "probe_radius_mm": float(stack.probe_radius_mm),
        "pixel_spacing_mm": float(stack.pixel_spacing_mm),
        "frame_width_px": int(stack.frames.shape[2]),
        "frame_height_px": int(stack.frames.shape[1]),
        "frames": entries,
    }
    manifest_path = os.path.join(out_dir, manifest_name)
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest_path


# ---------------------------------------------------------------------------
# Landmark I/O


def load_landmarks(path) -> LandmarkFile:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"landmark file not found: {path}")
    with open(path) as f:
        data = json.load(f)
    points = []
    for p in data.get("points", []):
        points.append(
            LandmarkPoint(
                name=str(p["name"]),
                role=str(p["role"]),
                slice=int(p["slice"]),
                x_mm=float(p["x_mm"]),
                y_mm=float(p["y_mm"]),
            )
        )
    return LandmarkFile(points=points)


def save_landmarks(lm: LandmarkFile, path) -> None:
    data = {
        "points": [
            {"name": p.name, "role": p.role, "slice": p.slice, "x_mm": p.x_mm, "y_mm": p.y_mm}
            for p in lm.points
        ]
    }
    with open(os.fspath(path), "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
