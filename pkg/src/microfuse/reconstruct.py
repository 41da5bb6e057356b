"""Axial 3D volume reconstruction from rotationally acquired 2D fan frames.

The probe rotates about the z axis; a frame at rotation angle theta images the
half-plane at that angle. Physical coordinates: x runs left-right, y
posterior-anterior (away from the probe), z along the probe (superior-
inferior). The probe center is at (0, 0); a point at radial distance
``rho = hypot(x, y)`` lies inside the imaged fan when ``r <= rho <= r + h``.

Within a frame, the column coordinate u measures from the left edge (equal to
z) and the depth coordinate measures from the frame bottom, which sits at the
probe surface. The frame lookup row (from the top) for a point at radius rho
is ``h - (rho - r)`` under the default radius-offset convention; passing
``offset_radius=False`` reproduces the verbatim lookup ``h - rho``, which
coincides with the default when r = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .imgio import FrameStack, ValidationError, Volume3D

DEFAULT_SIGMA_I = 0.4  # mm, in-plane voxel size
DEFAULT_SIGMA_T = 1.0  # mm, through-plane voxel size
GAP_FACTOR = 1.5  # nearest frame farther than this x median angular spacing -> background


@dataclass
class ProbeGeometry:
    """Probe radius and frame extents, all in mm."""

    probe_radius_mm: float
    frame_height_mm: float  # radial depth of a frame
    frame_width_mm: float  # along-probe extent of a frame
    pixel_spacing_mm: float

    def __post_init__(self):
        if self.probe_radius_mm < 0:
            raise ValidationError("probe radius must be >= 0")
        if self.frame_height_mm <= 0 or self.frame_width_mm <= 0:
            raise ValidationError("frame extents must be > 0")
        if self.pixel_spacing_mm <= 0:
            raise ValidationError("pixel spacing must be > 0")

    @property
    def frame_shape_px(self) -> tuple[int, int]:
        """(height_px, width_px) such that extents equal px count * spacing."""
        fh = round(self.frame_height_mm / self.pixel_spacing_mm)
        fw = round(self.frame_width_mm / self.pixel_spacing_mm)
        if abs(fh * self.pixel_spacing_mm - self.frame_height_mm) > 1e-9 \
                or abs(fw * self.pixel_spacing_mm - self.frame_width_mm) > 1e-9:
            raise ValidationError("frame extents must be integer multiples of pixel spacing")
        return fh, fw

    @classmethod
    def of_stack(cls, stack: FrameStack) -> "ProbeGeometry":
        return cls(
            probe_radius_mm=stack.probe_radius_mm,
            frame_height_mm=stack.frame_height_mm,
            frame_width_mm=stack.frame_width_mm,
            pixel_spacing_mm=stack.pixel_spacing_mm,
        )


@dataclass
class VolumeSpec:
    """Requested voxel sizes; extents and counts derive from the geometry."""

    sigma_i: float = DEFAULT_SIGMA_I
    sigma_t: float = DEFAULT_SIGMA_T

    def __post_init__(self):
        if self.sigma_i <= 0 or self.sigma_t <= 0:
            raise ValidationError("voxel sizes must be > 0")

    def extents_mm(self, geom: ProbeGeometry) -> tuple[float, float, float]:
        reach = geom.frame_height_mm + geom.probe_radius_mm
        return (2.0 * reach, reach, geom.frame_width_mm)

    def dims(self, geom: ProbeGeometry) -> tuple[int, int, int]:
        s_lr, s_pa, s_si = self.extents_mm(geom)
        # ceiling: never truncate the declared physical extent
        n_lr = max(1, math.ceil(s_lr / self.sigma_i - 1e-9))
        n_pa = max(1, math.ceil(s_pa / self.sigma_i - 1e-9))
        n_si = max(1, math.ceil(s_si / self.sigma_t - 1e-9))
        return n_lr, n_pa, n_si


@dataclass
class FanCoordinate:
    """Frame-space location of a physical point, if it lies inside the fan."""

    theta_deg: float
    u_mm: float  # along-probe (= z)
    v_mm: float  # frame lookup depth, measured from the frame top
    in_fan: bool


def voxel_to_fan(x_mm: float, y_mm: float, z_mm: float, geom: ProbeGeometry,
                 sweep_deg: tuple[float, float] = (-90.0, 90.0),
                 offset_radius: bool = True) -> FanCoordinate:
    """Map a physical point to fan-frame coordinates (total function)."""
    r = geom.probe_radius_mm
    h = geom.frame_height_mm
    theta = math.degrees(math.atan2(x_mm, y_mm))
    rho = math.hypot(x_mm, y_mm)
    v = h - (rho - r) if offset_radius else h - rho
    in_fan = (rho >= r - 1e-9 and rho <= r + h + 1e-9
              and 0.0 <= z_mm <= geom.frame_width_mm
              and sweep_deg[0] - 1e-9 <= theta <= sweep_deg[1] + 1e-9)
    return FanCoordinate(theta_deg=theta, u_mm=z_mm, v_mm=v, in_fan=in_fan)


def _max_gap_deg(angles_deg: np.ndarray) -> float:
    if angles_deg.size < 2:
        return 360.0
    return GAP_FACTOR * float(np.median(np.diff(angles_deg)))


def reconstruct_volume(stack: FrameStack, spec: VolumeSpec | None = None,
                       nearest: bool = False, offset_radius: bool = True) -> Volume3D:
    """Fill the axial voxel grid from the nearest-angle frame per voxel.

    Voxel (i, j, k) sits at x = sigma_i*i - (h+r), y = sigma_i*j,
    z = sigma_t*k; its intensity is read from the frame whose angle is
    closest to atan2(x, y), bilinearly in-plane (nearest-neighbor with
    ``nearest=True``). Out-of-fan voxels, and voxels whose nearest frame is
    farther than 1.5x the median angular spacing, are exactly 0.
    """
    if stack.n_frames == 0:
        raise ValidationError("empty frame stack")
    spec = spec or VolumeSpec()
    geom = ProbeGeometry.of_stack(stack)
    n_lr, n_pa, n_si = spec.dims(geom)
    voxels = kernels.fill_volume(
        np.ascontiguousarray(stack.frames, dtype=np.float32),
        np.ascontiguousarray(stack.angles_deg, dtype=np.float64),
        float(geom.probe_radius_mm),
        float(geom.pixel_spacing_mm),
        float(spec.sigma_i),
        float(spec.sigma_t),
        n_lr, n_pa, n_si,
        _max_gap_deg(stack.angles_deg),
        offset_radius,
        nearest,
    )
    reach = geom.frame_height_mm + geom.probe_radius_mm
    return Volume3D(
        voxels=voxels,
        spacing_mm=(spec.sigma_i, spec.sigma_i, spec.sigma_t),
        origin_mm=(-reach, 0.0, 0.0),
    )


def sample_fan_frames(volume: Volume3D, angles_deg, geom: ProbeGeometry,
                      offset_radius: bool = True) -> FrameStack:
    """Inverse of the reconstruction: synthesize oblique frames from a volume.

    The pixel at column c, row r (from the top) of the frame at angle theta
    samples the volume trilinearly at x = rho*sin(theta), y = rho*cos(theta),
    z = (c + 0.5)*spacing, where rho is the probe-centered radius of that
    pixel. Samples outside the volume are 0.
    """
    angles = np.asarray(angles_deg, dtype=np.float64)
    if angles.ndim != 1 or angles.size == 0:
        raise ValidationError("need at least one sampling angle")
    if np.any(angles < -90.0) or np.any(angles > 90.0):
        raise ValidationError("sampling angle outside [-90, 90]")
    order = np.argsort(angles, kind="stable")
    angles = angles[order]
    fh, fw = geom.frame_shape_px
    sx, sy, sz = volume.spacing_mm
    ox, oy, oz = volume.origin_mm
    frames = kernels.sample_fan(
        np.ascontiguousarray(volume.voxels, dtype=np.float32),
        float(sx), float(sy), float(sz),
        float(ox), float(oy), float(oz),
        angles,
        float(geom.probe_radius_mm),
        fh, fw,
        float(geom.pixel_spacing_mm),
        offset_radius,
    )
    return FrameStack(
        frames=frames,
        angles_deg=angles,
        probe_radius_mm=geom.probe_radius_mm,
        pixel_spacing_mm=geom.pixel_spacing_mm,
    )


def axial_slice_frame_offset(volume: Volume3D) -> tuple[float, float]:
    """Offset from volume physical (x, y) to exported-slice image coordinates.

    Exported axial slices put pixel (row=j, col=i) at image coordinates
    ((i+0.5)*sx, (j+0.5)*sy), so image = volume_physical + this offset.
    """
    sx, sy, _ = volume.spacing_mm
    ox, oy, _ = volume.origin_mm
    return (-ox + 0.5 * sx, -oy + 0.5 * sy)
