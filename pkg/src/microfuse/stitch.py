"""Composition of oriented histology fragments into a pseudo-whole-mount image.

Each fragment first gets its manually recorded horizontal flip and gross
rotation applied; a rigid (optionally similarity) transform fitted to manually
selected landmark pairs then places it on a shared canvas. Overlaps resolve
by first-listed-fragment priority, and the background is histology white.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .imgio import Image2D, ValidationError

WHITE = 1.0


@dataclass
class Fragment:
    image: Image2D
    flip_horizontal: bool = False
    gross_rotation_deg: float = 0.0
    ink_side: str = "none"  # left-black | right-blue | none (recorded, not interpreted)

    def __post_init__(self):
        if not math.isfinite(self.gross_rotation_deg):
            raise ValidationError("rotation must be finite")


@dataclass
class RigidTransform2D:
    """p -> scale * R(rotation) p + translation, in mm (moving -> canvas)."""

    rotation_deg: float = 0.0
    translation_mm: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValidationError("scale must be > 0")

    def matrix(self) -> np.ndarray:
        a = math.radians(self.rotation_deg)
        c, s = math.cos(a), math.sin(a)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.matrix().T + np.asarray(self.translation_mm)

    def inverse_apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        inv = np.linalg.inv(self.matrix())
        return (pts - np.asarray(self.translation_mm)) @ inv.T


@dataclass
class StitchPlan:
    transforms: list[RigidTransform2D]
    canvas_size_mm: tuple[float, float]  # (width, height)
    canvas_spacing_mm: float = 0.1
    background: float = WHITE


def _rotate_exact90(arr: np.ndarray, quarter_turns: int) -> np.ndarray:
    return np.rot90(arr, k=quarter_turns % 4, axes=(0, 1))


def _sample_rgb(arr: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                fill: float) -> np.ndarray:
    if arr.ndim == 2:
        return kernels.bilinear(np.ascontiguousarray(arr), rows, cols, fill, 0.5)
    return np.stack([
        kernels.bilinear(np.ascontiguousarray(arr[:, :, c]), rows, cols, fill, 0.5)
        for c in range(arr.shape[2])], axis=-1)


def orient_fragment(fragment: Fragment) -> Image2D:
    """Apply the recorded flip, then the gross rotation about the image center.

    Exact multiples of 90 degrees are index permutations; other angles are
    bilinear resamples onto the rotated bounding box with white background.
    Positive angles rotate counterclockwise on screen.
    """
    arr = fragment.image.pixels
    if fragment.flip_horizontal:
        arr = arr[:, ::-1].copy()
    deg = fragment.gross_rotation_deg % 360.0
    if abs(deg - round(deg / 90.0) * 90.0) < 1e-12:
        out = _rotate_exact90(arr, int(round(deg / 90.0)))
        return Image2D(pixels=out, spacing_mm=fragment.image.spacing_mm)

    sx, sy = fragment.image.spacing_mm
    h, w = arr.shape[:2]
    phi = math.radians(deg)
    wm, hm = w * sx, h * sy
    out_w = abs(wm * math.cos(phi)) + abs(hm * math.sin(phi))
    out_h = abs(wm * math.sin(phi)) + abs(hm * math.cos(phi))
    nw = max(1, int(math.ceil(out_w / sx - 1e-9)))
    nh = max(1, int(math.ceil(out_h / sy - 1e-9)))
    ccols, crows = np.meshgrid(np.arange(nw), np.arange(nh))
    x_o = (ccols.ravel() + 0.5) * sx - nw * sx / 2.0
    y_o = (crows.ravel() + 0.5) * sy - nh * sy / 2.0
    # source = center + R(phi) * offset, where R is the standard rotation in
    # (x, y-down) coordinates; at phi = 90 deg this reproduces np.rot90(k=1)
    x_s = math.cos(phi) * x_o - math.sin(phi) * y_o + wm / 2.0
    y_s = math.sin(phi) * x_o + math.cos(phi) * y_o + hm / 2.0
    rows = np.ascontiguousarray(y_s / sy - 0.5)
    cols = np.ascontiguousarray(x_s / sx - 0.5)
    vals = _sample_rgb(arr, rows, cols, WHITE)
    shape = (nh, nw) if arr.ndim == 2 else (nh, nw, 3)
    return Image2D(pixels=vals.reshape(shape), spacing_mm=fragment.image.spacing_mm)


def fit_rigid_landmarks(pairs, allow_scale: bool = False) -> RigidTransform2D:
    """Least-squares rigid (or similarity) fit of moving->fixed landmark pairs.

    Closed-form orthogonal Procrustes: determinant +1 is enforced, so
    reflections can only come from the explicit fragment flip flag.
    """
    if len(pairs) < 2:
        raise ValidationError("need at least 2 landmark pairs")
    moving = np.asarray([p[0] for p in pairs], dtype=np.float64)
    fixed = np.asarray([p[1] for p in pairs], dtype=np.float64)
    if not (np.isfinite(moving).all() and np.isfinite(fixed).all()):
        raise ValidationError("non-finite landmark coordinates")
    mu_m = moving.mean(axis=0)
    mu_f = fixed.mean(axis=0)
    am = moving - mu_m
    af = fixed - mu_f
    var_m = float((am ** 2).sum())
    if var_m < 1e-15:
        raise ValidationError("degenerate configuration: moving landmarks coincide")
    cov = af.T @ am
    u, sv, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    corr = np.diag([1.0, d])
    rot = u @ corr @ vt
    scale = float((sv * np.diag(corr)).sum() / var_m) if allow_scale else 1.0
    if scale <= 0:
        raise ValidationError("degenerate configuration: non-positive fitted scale")
    t = mu_f - scale * rot @ mu_m
    angle = math.degrees(math.atan2(rot[1, 0], rot[0, 0]))
    return RigidTransform2D(rotation_deg=angle, translation_mm=(float(t[0]), float(t[1])),
                            scale=scale)


def fit_residual(pairs, transform: RigidTransform2D) -> float:
    """Root-mean-square landmark misfit of a candidate transform."""
    moving = np.asarray([p[0] for p in pairs], dtype=np.float64)
    fixed = np.asarray([p[1] for p in pairs], dtype=np.float64)
    d = transform.apply(moving) - fixed
    return float(np.sqrt((d ** 2).sum(axis=1).mean()))


def compose_fragments(fragments: list[Image2D], transforms: list[RigidTransform2D],
                      plan: StitchPlan) -> Image2D:
    """Resample fragments into the shared canvas, first-listed wins overlaps."""
    if len(fragments) != len(transforms):
        raise ValidationError("one transform per fragment required")
    cw, ch = plan.canvas_size_mm
    s = plan.canvas_spacing_mm
    nw = max(1, int(math.ceil(cw / s - 1e-9)))
    nh = max(1, int(math.ceil(ch / s - 1e-9)))

    rgb = any(f.is_rgb for f in fragments)
    shape = (nh, nw, 3) if rgb else (nh, nw)
    canvas = np.full(shape, plan.background, dtype=np.float64)
    covered = np.zeros((nh, nw), dtype=bool)

    ccols, crows = np.meshgrid(np.arange(nw), np.arange(nh))
    pts = np.stack([(ccols.ravel() + 0.5) * s, (crows.ravel() + 0.5) * s], axis=1)

    for frag, tr in zip(fragments, transforms):
        fw = frag.width_px * frag.spacing_mm[0]
        fh = frag.height_px * frag.spacing_mm[1]
        corners = np.array([[0, 0], [fw, 0], [0, fh], [fw, fh]], dtype=np.float64)
        mapped = tr.apply(corners)
        if (mapped[:, 0].min() < -1e-6 or mapped[:, 0].max() > cw + 1e-6
                or mapped[:, 1].min() < -1e-6 or mapped[:, 1].max() > ch + 1e-6):
            raise ValidationError("fragment footprint exceeds canvas")
        q = tr.inverse_apply(pts)
        inside = ((q[:, 0] >= 0) & (q[:, 0] <= fw)
                  & (q[:, 1] >= 0) & (q[:, 1] <= fh)).reshape(nh, nw)
        write = inside & ~covered
        if not write.any():
            covered |= inside
            continue
        rows = np.ascontiguousarray(q[:, 1] / frag.spacing_mm[1] - 0.5)
        cols = np.ascontiguousarray(q[:, 0] / frag.spacing_mm[0] - 0.5)
        vals = _sample_rgb(frag.pixels, rows, cols, plan.background)
        if rgb and frag.pixels.ndim == 2:
            vals = np.repeat(vals[:, None], 3, axis=1)
        vals = vals.reshape(shape)
        canvas[write] = vals[write]
        covered |= inside
    return Image2D(pixels=canvas, spacing_mm=(s, s))
