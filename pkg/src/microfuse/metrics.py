"""Per-slice registration quality metrics and their per-case means.

Dice and Hausdorff work on binary prostate masks sharing one grid; urethra
deviation and landmark error are Euclidean distances between corresponding
physical points (centers of mass of the respective label blobs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion
from scipy.spatial import cKDTree

from .imgio import ValidationError

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def dice(mask_i: np.ndarray, mask_j: np.ndarray) -> float:
    """2|I∩J| / (|I|+|J|); both-empty masks are defined as 1.0."""
    mask_i = np.asarray(mask_i, dtype=bool)
    mask_j = np.asarray(mask_j, dtype=bool)
    if mask_i.shape != mask_j.shape:
        raise ValidationError(f"mask grids differ: {mask_i.shape} vs {mask_j.shape}")
    ni = int(mask_i.sum())
    nj = int(mask_j.sum())
    if ni + nj == 0:
        return 1.0
    inter = int(np.count_nonzero(mask_i & mask_j))
    return 2.0 * inter / (ni + nj)


def boundary_points(mask: np.ndarray, spacing_mm: tuple[float, float]) -> np.ndarray:
    """Physical centers of boundary pixels (mask pixels with a 4-neighbor
    outside the mask; the image border counts as outside)."""
    mask = np.asarray(mask, dtype=bool)
    interior = binary_erosion(mask, structure=_CROSS, border_value=0)
    ys, xs = np.nonzero(mask & ~interior)
    sx, sy = spacing_mm
    return np.stack([(xs + 0.5) * sx, (ys + 0.5) * sy], axis=1)


def hausdorff(mask_i: np.ndarray, mask_j: np.ndarray,
              spacing_mm: tuple[float, float] = (1.0, 1.0),
              return_directed: bool = False):
    """Symmetric Hausdorff distance between mask boundaries, in mm."""
    mask_i = np.asarray(mask_i, dtype=bool)
    mask_j = np.asarray(mask_j, dtype=bool)
    if mask_i.shape != mask_j.shape:
        raise ValidationError(f"mask grids differ: {mask_i.shape} vs {mask_j.shape}")
    if not mask_i.any() or not mask_j.any():
        raise ValidationError("hausdorff requires nonempty masks")
    bi = boundary_points(mask_i, spacing_mm)
    bj = boundary_points(mask_j, spacing_mm)
    d_ij = float(cKDTree(bj).query(bi)[0].max())
    d_ji = float(cKDTree(bi).query(bj)[0].max())
    if return_directed:
        return max(d_ij, d_ji), d_ij, d_ji
    return max(d_ij, d_ji)


def urethra_deviation(center_microus, center_histology) -> float:
    """Euclidean distance between urethra centers of mass, in mm."""
    (xm, ym), (xh, yh) = center_microus, center_histology
    return math.hypot(xm - xh, ym - yh)


def landmark_error(point_microus, point_histology) -> float:
    """Euclidean distance between corresponding landmark centers, in mm."""
    return urethra_deviation(point_microus, point_histology)


def center_of_mass(mask: np.ndarray, spacing_mm: tuple[float, float]) -> tuple[float, float]:
    """Unweighted centroid of mask pixel centers, in mm."""
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    if ys.size == 0:
        raise ValidationError("center_of_mass of empty mask")
    sx, sy = spacing_mm
    return (float((xs.mean() + 0.5) * sx), float((ys.mean() + 0.5) * sy))


@dataclass
class SliceMetrics:
    slice_index: int
    dice: float
    hausdorff_mm: float
    urethra_deviation_mm: float | None = None
    landmark_error_mm: float | None = None


@dataclass
class CaseReport:
    slices: list[SliceMetrics] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.slices)

    def means(self) -> dict:
        """Arithmetic means over slices where each metric is present."""
        out = {}
        for name in ("dice", "hausdorff_mm", "urethra_deviation_mm", "landmark_error_mm"):
            vals = [getattr(s, name) for s in self.slices if getattr(s, name) is not None]
            out[name] = float(np.mean(vals)) if vals else None
            out[f"n_{name}"] = len(vals)
        return out


def aggregate_case(slices: list[SliceMetrics], skipped: list[dict] | None = None) -> CaseReport:
    """Combine per-slice metrics into a case report with per-metric means."""
    if not slices:
        raise ValidationError("aggregate_case needs at least one slice")
    return CaseReport(slices=list(slices), skipped=list(skipped or []))
