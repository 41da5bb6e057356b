"""2D spatial transforms and resampling.

All transforms map fixed-image physical coordinates (mm) to moving-image
physical coordinates (mm) — the resampling convention: the warped moving
image at fixed point p is ``moving(T(p))``.

Composition order is fixed: a point in fixed space is first displaced by the
free-form deformation, then mapped by the affine, i.e.
``T(p) = A(p + D(p))``. With zero displacements this reduces to the affine.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .imgio import Image2D, LabelMap2D, ValidationError


@dataclass
class AffineTransform2D:
    """2x3 matrix [[a, b, tx], [c, d, ty]] acting on column points (x, y)."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (2, 3):
            raise ValidationError(f"affine matrix must be 2x3, got {self.matrix.shape}")
        if abs(self.det) <= 1e-12:
            raise ValidationError("affine linear part is singular")

    @property
    def det(self) -> float:
        m = self.matrix
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @classmethod
    def identity(cls) -> "AffineTransform2D":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def from_params(cls, p) -> "AffineTransform2D":
        p = np.asarray(p, dtype=np.float64)
        return cls(p.reshape(2, 3))

    @property
    def params(self) -> np.ndarray:
        """Flat parameters [a, b, tx, c, d, ty]."""
        return self.matrix.ravel().copy()

    def with_params(self, p) -> "AffineTransform2D":
        return AffineTransform2D.from_params(p)

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "AffineTransform2D":
        lin = self.matrix[:, :2]
        inv = np.linalg.inv(lin)
        t = -inv @ self.matrix[:, 2]
        return AffineTransform2D(np.column_stack([inv, t]))

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineTransform2D":
        return cls(np.asarray(d["matrix"], dtype=np.float64))


@dataclass
class CenteredAffine2D:
    """Affine about a fixed rotation center: T(p) = L (p - c) + c + t.

    Decouples the linear parameters from the translation during optimization
    (a rotation no longer drags the object by its lever arm to the origin);
    convertible to the plain matrix form with :meth:`to_affine`.
    """

    linear: np.ndarray  # (2, 2)
    offset: np.ndarray  # (2,) translation t
    center: np.ndarray  # (2,) fixed rotation center c

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=np.float64).reshape(2, 2)
        self.offset = np.asarray(self.offset, dtype=np.float64).reshape(2)
        self.center = np.asarray(self.center, dtype=np.float64).reshape(2)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.linear.ravel(), self.offset])

    def with_params(self, p) -> "CenteredAffine2D":
        p = np.asarray(p, dtype=np.float64)
        return CenteredAffine2D(linear=p[:4].reshape(2, 2), offset=p[4:6],
                                center=self.center)

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return (pts - self.center) @ self.linear.T + self.center + self.offset

    def to_affine(self) -> AffineTransform2D:
        t = self.center + self.offset - self.linear @ self.center
        return AffineTransform2D(np.column_stack([self.linear, t]))


@dataclass
class FFDTransform2D:
    """Cubic B-spline free-form deformation on a regular control grid.

    Control point (ix, iy) sits at ``grid_origin_mm + (ix, iy) * spacing`` and
    carries a displacement vector in mm. Coefficients outside the grid are
    zero, so the displacement fades smoothly to zero beyond the grid support.
    ``coef_x``/``coef_y`` are (ncy, ncx) arrays; the serialized parameter
    vector interleaves (dx, dy) per control point in row-major (iy, ix) order.
    """

    grid_origin_mm: tuple[float, float]
    grid_spacing_mm: tuple[float, float]
    coef_x: np.ndarray = field(default=None)
    coef_y: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coef_x = np.asarray(self.coef_x, dtype=np.float64)
        self.coef_y = np.asarray(self.coef_y, dtype=np.float64)
        if self.coef_x.ndim != 2 or self.coef_x.shape != self.coef_y.shape:
            raise ValidationError("coef_x/coef_y must be matching 2D arrays")
        if min(self.grid_spacing_mm) <= 0:
            raise ValidationError("grid spacing must be > 0")
        if not (np.isfinite(self.coef_x).all() and np.isfinite(self.coef_y).all()):
            raise ValidationError("non-finite control displacements")

    @property
    def grid_dims(self) -> tuple[int, int]:
        return (self.coef_x.shape[1], self.coef_x.shape[0])  # (ncx, ncy)

    @classmethod
    def zeros_for_domain(cls, x_range: tuple[float, float], y_range: tuple[float, float],
                         spacing_mm: tuple[float, float]) -> "FFDTransform2D":
        """Grid covering [x0,x1] x [y0,y1] with one extra control ring per side."""
        dx, dy = spacing_mm
        x0, x1 = x_range
        y0, y1 = y_range
        ncx = int(np.ceil((x1 - x0) / dx - 1e-9)) + 4
        ncy = int(np.ceil((y1 - y0) / dy - 1e-9)) + 4
        origin = (x0 - dx, y0 - dy)
        return cls(
            grid_origin_mm=origin,
            grid_spacing_mm=(dx, dy),
            coef_x=np.zeros((ncy, ncx)),
            coef_y=np.zeros((ncy, ncx)),
        )

    def grid_coords(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=np.float64)
        tx = (pts[..., 0] - self.grid_origin_mm[0]) / self.grid_spacing_mm[0]
        ty = (pts[..., 1] - self.grid_origin_mm[1]) / self.grid_spacing_mm[1]
        return tx, ty

    def displacement(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        tx, ty = self.grid_coords(pts.reshape(-1, 2))
        dx, dy = kernels.ffd_disp(np.ascontiguousarray(tx), np.ascontiguousarray(ty),
                                  self.coef_x, self.coef_y)
        return np.stack([dx, dy], axis=-1).reshape(pts.shape)

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) + self.displacement(pts)

    @property
    def params(self) -> np.ndarray:
        return np.stack([self.coef_x.ravel(), self.coef_y.ravel()], axis=1).ravel()

    def with_params(self, p) -> "FFDTransform2D":
        p = np.asarray(p, dtype=np.float64).reshape(-1, 2)
        ncy, ncx = self.coef_x.shape
        return FFDTransform2D(
            grid_origin_mm=self.grid_origin_mm,
            grid_spacing_mm=self.grid_spacing_mm,
            coef_x=p[:, 0].reshape(ncy, ncx),
            coef_y=p[:, 1].reshape(ncy, ncx),
        )

    def max_displacement(self) -> float:
        return float(np.hypot(self.coef_x, self.coef_y).max()) if self.coef_x.size else 0.0

    def to_dict(self) -> dict:
        ncx, ncy = self.grid_dims
        return {
            "grid_origin_mm": list(self.grid_origin_mm),
            "grid_spacing_mm": list(self.grid_spacing_mm),
            "grid_dims": [ncx, ncy],
            "displacements_mm": self.params.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FFDTransform2D":
        ncx, ncy = (int(v) for v in d["grid_dims"])
        disp = np.asarray(d["displacements_mm"], dtype=np.float64).reshape(ncy * ncx, 2)
        return cls(
            grid_origin_mm=tuple(float(v) for v in d["grid_origin_mm"]),
            grid_spacing_mm=tuple(float(v) for v in d["grid_spacing_mm"]),
            coef_x=disp[:, 0].reshape(ncy, ncx),
            coef_y=disp[:, 1].reshape(ncy, ncx),
        )


@dataclass
class ComposedTransform2D:
    """FFD displacement followed by an affine: T(p) = A(p + D(p)).

    ``params`` exposes only the FFD displacements; the affine is frozen, which
    matches the two-stage registration where the affine stage has already
    converged before the deformable stage runs.
    """

    affine: AffineTransform2D
    ffd: FFDTransform2D

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        return self.affine.map_points(self.ffd.map_points(pts))

    @property
    def params(self) -> np.ndarray:
        return self.ffd.params

    def with_params(self, p) -> "ComposedTransform2D":
        return ComposedTransform2D(affine=self.affine, ffd=self.ffd.with_params(p))


def invert_points(transform, query_pts: np.ndarray, iters: int = 60,
                  tol: float = 1e-10) -> np.ndarray:
    """Numerically invert a transform at the given points.

    Solves T(p) = q by fixed-point iteration on the displacement part; exact
    for pure affines. Convergence requires the deformation gradient to be a
    contraction, which holds for the smooth fields used here.
    """
    q = np.asarray(query_pts, dtype=np.float64)
    if isinstance(transform, AffineTransform2D):
        return transform.inverse().map_points(q)
    if isinstance(transform, ComposedTransform2D):
        target = transform.affine.inverse().map_points(q)  # p + D(p) = target
        ffd = transform.ffd
    elif isinstance(transform, FFDTransform2D):
        target = q
        ffd = transform
    else:
        raise TypeError(f"cannot invert {type(transform).__name__}")
    p = target.copy()
    for _ in range(iters):
        p_next = target - ffd.displacement(p)
        if np.abs(p_next - p).max() < tol:
            return p_next
        p = p_next
    return p


# ---------------------------------------------------------------------------
# Resampling


def _target_grid(grid) -> tuple[int, int, tuple[float, float]]:
    if isinstance(grid, (Image2D, LabelMap2D)):
        return grid.height_px, grid.width_px, grid.spacing_mm
    h, w, spacing = grid
    return int(h), int(w), (float(spacing[0]), float(spacing[1]))


def _grid_points(h: int, w: int, spacing: tuple[float, float]) -> np.ndarray:
    sx, sy = spacing
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    return np.stack([(cols.ravel() + 0.5) * sx, (rows.ravel() + 0.5) * sy], axis=1)


def resample(src: Image2D, transform, grid, interpolation: str = "bilinear",
             fill: float = 0.0) -> Image2D:
    """Warp ``src`` onto the target grid: output(p) = src(transform(p)).

    ``grid`` is an Image2D/LabelMap2D template or a (height_px, width_px,
    (sx, sy)) tuple. Out-of-domain samples take the fill value.
    """
    h, w, spacing = _target_grid(grid)
    pts = _grid_points(h, w, spacing)
    q = transform.map_points(pts)
    ssx, ssy = src.spacing_mm
    rows = np.ascontiguousarray(q[:, 1] / ssy - 0.5)
    cols = np.ascontiguousarray(q[:, 0] / ssx - 0.5)
    if interpolation == "bilinear":
        sampler = lambda plane: kernels.bilinear(plane, rows, cols, float(fill), 0.0)
    elif interpolation == "nearest":
        sampler = lambda plane: kernels.nearest(plane, rows, cols, float(fill))
    else:
        raise ValidationError(f"unknown interpolation {interpolation!r}")
    if src.is_rgb:
        out = np.stack(
            [sampler(np.ascontiguousarray(src.pixels[:, :, c])).reshape(h, w)
             for c in range(3)], axis=-1)
    else:
        out = sampler(np.ascontiguousarray(src.pixels)).reshape(h, w)
    return Image2D(pixels=out, spacing_mm=spacing)


def warp_labels(labels: LabelMap2D, transform, grid) -> LabelMap2D:
    """Nearest-neighbor label warp; uncovered pixels become background."""
    h, w, spacing = _target_grid(grid)
    pts = _grid_points(h, w, spacing)
    q = transform.map_points(pts)
    ssx, ssy = labels.spacing_mm
    rows = np.ascontiguousarray(q[:, 1] / ssy - 0.5)
    cols = np.ascontiguousarray(q[:, 0] / ssx - 0.5)
    out = kernels.nearest(labels.labels, rows, cols, np.uint8(0)).reshape(h, w)
    return LabelMap2D(labels=out, spacing_mm=spacing)


# ---------------------------------------------------------------------------
# Transform file I/O


def save_transforms(path, affine: AffineTransform2D | None = None,
                    ffd: FFDTransform2D | None = None) -> None:
    """Write affine and/or FFD JSON next to each other under a base path."""
    base = os.fspath(path)
    if affine is not None:
        with open(base + "_affine.json", "w") as f:
            json.dump(affine.to_dict(), f, indent=2)
            f.write("\n")
    if ffd is not None:
        with open(base + "_ffd.json", "w") as f:
            json.dump(ffd.to_dict(), f, indent=2)
            f.write("\n")


def load_affine(path) -> AffineTransform2D:
    with open(os.fspath(path)) as f:
        return AffineTransform2D.from_dict(json.load(f))


def load_ffd(path) -> FFDTransform2D:
    with open(os.fspath(path)) as f:
        return FFDTransform2D.from_dict(json.load(f))
