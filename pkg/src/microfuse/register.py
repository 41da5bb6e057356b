"""Two-stage 2D registration: mask-guided affine (SSD), then free-form
deformation driven by Mattes mutual information, both under a coarse-to-fine
multi-resolution pyramid.

The optimizer is deterministic normalized gradient descent with parameter
scaling: each iteration moves at most ``learning_rate x (physical pixel size
at the current level)`` worth of displacement, candidate steps are accepted
only if they improve the loss (otherwise the step length is halved), and the
best accepted iterate is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation, gaussian_filter

from . import kernels
from .imgio import Image2D, ValidationError
from .losses import LossResult, mattes_mi, ssd_loss
from .transforms import (
    AffineTransform2D,
    CenteredAffine2D,
    ComposedTransform2D,
    FFDTransform2D,
)

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = ((8, 4.0), (4, 2.0), (2, 1.0))
# optimizer behavior per stage (see _descend)
_AFFINE_MOMENTUM = 0.6
_AFFINE_GROWTH = 32.0
_FFD_MOMENTUM = 0.8
_FFD_GROWTH = 8.0
_MI_MIN_SAMPLES_PER_BIN = 10  # pyramid levels with fewer masked samples are skipped
# Verbatim shrink/sigma pairing as published; non-monotone shrink order.
LITERAL_PAPER_SCHEDULE = ((4, 4.0), (8, 2.0), (2, 1.0))


@dataclass
class PyramidSchedule:
    levels: tuple[tuple[int, float], ...] = DEFAULT_SCHEDULE

    def __post_init__(self):
        self.levels = tuple((int(k), float(s)) for k, s in self.levels)
        if not self.levels:
            raise ValidationError("schedule needs at least one level")
        if any(k < 1 for k, _ in self.levels):
            raise ValidationError("shrink factors must be >= 1")


@dataclass
class RegistrationConfig:
    learning_rate: float = 0.2
    iterations_per_level: int = 12
    mi_bins: int = 32
    mi_sampling_ring_mm: float = 2.0  # background ring included in the MI sample set
    ffd_cells: int = 7  # prostate bounding box divided into this many cells per axis
    schedule: PyramidSchedule = field(default_factory=PyramidSchedule)
    bending_weight: float = 0.01  # FFD bending-energy weight; 0 disables

    def __post_init__(self):
        if self.learning_rate <= 0 or self.iterations_per_level <= 0:
            raise ValidationError("learning rate and iterations must be > 0")
        if self.mi_bins < 8:
            raise ValidationError("mi_bins must be >= 8")
        if self.ffd_cells < 1:
            raise ValidationError("ffd_cells must be >= 1")
        if isinstance(self.schedule, (tuple, list)):
            self.schedule = PyramidSchedule(tuple(self.schedule))


@dataclass
class RegistrationResult:
    affine: AffineTransform2D | None = None
    ffd: FFDTransform2D | None = None
    trace: list = field(default_factory=list)  # (level, iteration, loss)
    final_loss: float = float("nan")
    degenerate: bool = False


def _pyramid_level(arr: np.ndarray, spacing: tuple[float, float],
                   shrink: int, sigma_px: float) -> tuple[np.ndarray, tuple[float, float]]:
    """Gaussian smooth then resample at the coarse-grid pixel centers."""
    sm = gaussian_filter(arr, sigma_px, mode="nearest") if sigma_px > 0 else arr
    if shrink == 1:
        return np.ascontiguousarray(sm, dtype=np.float64), spacing
    h, w = arr.shape
    nh = max(1, int(np.ceil(h / shrink)))
    nw = max(1, int(np.ceil(w / shrink)))
    rows = (np.arange(nh) + 0.5) * shrink - 0.5
    cols = (np.arange(nw) + 0.5) * shrink - 0.5
    cc, rr = np.meshgrid(cols, rows)
    vals = kernels.bilinear(np.ascontiguousarray(sm, dtype=np.float64),
                            np.ascontiguousarray(rr.ravel()),
                            np.ascontiguousarray(cc.ravel()), 0.0, 0.5)
    return vals.reshape(nh, nw), (spacing[0] * shrink, spacing[1] * shrink)


def _mask_stats(mask: np.ndarray, spacing: tuple[float, float]):
    """Center of mass, area (mm^2) and bounding box of a binary mask."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValidationError("empty mask")
    sx, sy = spacing
    com = np.array([(xs.mean() + 0.5) * sx, (ys.mean() + 0.5) * sy])
    area = ys.size * sx * sy
    bbox = ((xs.min() * sx, (xs.max() + 1) * sx), (ys.min() * sy, (ys.max() + 1) * sy))
    return com, area, bbox


def _descend(loss_fn, transform, scales: np.ndarray, eta: float, iterations: int,
             trace: list, level: int, norm: str, momentum: float,
             max_growth: float) -> tuple:
    """Normalized, scale-aware gradient descent with heavy-ball momentum.

    Steps are accepted only if they improve the loss; an accepted direction is
    greedily expanded (doubling, bounded), a rejected one halves the step and
    resets the momentum. Deterministic, and the iterate sequence for a given
    level depends only on its history, so doubling the iteration budget
    extends rather than changes the trajectory.
    """
    res: LossResult = loss_fn(transform)
    trace.append((level, 0, res.loss))
    best_t, best_loss = transform, res.loss
    step = eta
    velocity = np.zeros_like(transform.params)
    for it in range(1, iterations + 1):
        gq = res.grad / scales
        gn = float(np.max(np.abs(gq))) if norm == "inf" else float(np.linalg.norm(gq))
        if gn < 1e-14:
            trace.append((level, it, res.loss))
            continue
        direction = -gq / gn / scales
        velocity = momentum * velocity + step * direction
        cand = transform.with_params(transform.params + velocity)
        cres = loss_fn(cand)
        if cres.loss < res.loss:
            while step < max_growth * eta:
                bigger = transform.with_params(transform.params + velocity + step * direction)
                bres = loss_fn(bigger)
                if bres.loss < cres.loss:
                    cand, cres = bigger, bres
                    velocity = velocity + step * direction
                    step *= 2.0
                else:
                    break
            transform, res = cand, cres
            if res.loss < best_loss:
                best_t, best_loss = transform, res.loss
        else:
            step *= 0.5
            velocity[:] = 0.0
        trace.append((level, it, res.loss))
    return best_t, best_loss


def _as_float_image(img) -> Image2D:
    if isinstance(img, Image2D):
        return img
    raise TypeError("expected Image2D")


def register_affine(fixed_mask: Image2D, moving_mask: Image2D,
                    config: RegistrationConfig | None = None,
                    full_result: bool = False):
    """Recover the affine that maps fixed physical points onto the moving mask.

    Initialization aligns centers of mass with an isotropic scale equal to
    the square root of the mask area ratio; gradient descent on the SSD of
    the (smoothed) masks refines it over the pyramid levels.
    """
    config = config or RegistrationConfig()
    fixed_mask = _as_float_image(fixed_mask)
    moving_mask = _as_float_image(moving_mask)

    fbin = fixed_mask.gray() > 0.5
    mbin = moving_mask.gray() > 0.5
    com_f, area_f, bbox_f = _mask_stats(fbin, fixed_mask.spacing_mm)
    com_m, area_m, _ = _mask_stats(mbin, moving_mask.spacing_mm)
    scale0 = float(np.sqrt(area_m / area_f))
    # optimize about the fixed center of mass so rotations do not drag the
    # mask by its lever arm to the image corner
    t = CenteredAffine2D(linear=scale0 * np.eye(2), offset=com_m - com_f, center=com_f)

    # characteristic length makes the unitless linear parameters commensurate
    # with the mm translations
    (bx0, bx1), (by0, by1) = bbox_f
    char_len = max(0.5 * np.hypot(bx1 - bx0, by1 - by0), 1e-6)
    scales = np.array([char_len, char_len, char_len, char_len, 1.0, 1.0])

    result = RegistrationResult()
    best_loss = float("nan")
    for level, (shrink, sigma) in enumerate(config.schedule.levels):
        fl, fsp = _pyramid_level(fixed_mask.gray(), fixed_mask.spacing_mm, shrink, sigma)
        ml, msp = _pyramid_level(moving_mask.gray(), moving_mask.spacing_mm, shrink, sigma)
        f_img = Image2D(pixels=fl, spacing_mm=fsp)
        m_img = Image2D(pixels=ml, spacing_mm=msp)
        eta = config.learning_rate * max(fsp)
        t, best_loss = _descend(
            lambda trans, _f=f_img, _m=m_img: ssd_loss(_f, _m, trans),
            t, scales, eta, config.iterations_per_level, result.trace, level,
            norm="l2", momentum=_AFFINE_MOMENTUM, max_growth=_AFFINE_GROWTH)
    result.affine = t.to_affine()
    result.final_loss = best_loss
    return result if full_result else result.affine


def register_ffd(fixed_img: Image2D, moving_img: Image2D,
                 fixed_mask: np.ndarray, moving_mask: np.ndarray,
                 affine_init: AffineTransform2D,
                 config: RegistrationConfig | None = None,
                 full_result: bool = False):
    """Deformable stage: optimize B-spline control displacements by MI.

    The total transform maps a fixed point p to ``affine_init(p + D(p))``.
    Images are masked (out-of-prostate pixels zeroed) and only fixed pixels
    inside the prostate mask enter the metric. Degenerate MI (constant
    masked intensities) returns the zero-displacement FFD with a warning.
    """
    config = config or RegistrationConfig()
    fixed_img = _as_float_image(fixed_img)
    moving_img = _as_float_image(moving_img)
    fixed_mask = np.asarray(fixed_mask, dtype=bool)
    moving_mask = np.asarray(moving_mask, dtype=bool)
    if fixed_mask.shape != fixed_img.gray().shape:
        raise ValidationError("fixed mask grid does not match fixed image")
    if moving_mask.shape != moving_img.gray().shape:
        raise ValidationError("moving mask grid does not match moving image")

    f_arr = fixed_img.gray() * fixed_mask
    m_arr = moving_img.gray() * moving_mask
    # sampling over a thin background ring anchors the boundary: under drift
    # the (zeroed-fixed, moving) pairs in the ring decorrelate and MI drops
    ring_px = int(round(config.mi_sampling_ring_mm / min(fixed_img.spacing_mm)))
    if ring_px > 0:
        sampling_mask = binary_dilation(fixed_mask, iterations=ring_px)
    else:
        sampling_mask = fixed_mask

    _, _, ((bx0, bx1), (by0, by1)) = _mask_stats(fixed_mask, fixed_img.spacing_mm)
    cell = (max((bx1 - bx0), 1e-6) / config.ffd_cells,
            max((by1 - by0), 1e-6) / config.ffd_cells)
    sx, sy = fixed_img.spacing_mm
    ffd = FFDTransform2D.zeros_for_domain(
        (0.0, fixed_img.width_px * sx), (0.0, fixed_img.height_px * sy), cell)

    result = RegistrationResult(affine=affine_init)
    probe = mattes_mi(Image2D(pixels=f_arr, spacing_mm=fixed_img.spacing_mm),
                      Image2D(pixels=m_arr, spacing_mm=moving_img.spacing_mm),
                      ComposedTransform2D(affine_init, ffd),
                      bins=config.mi_bins, mask=fixed_mask)  # degeneracy probe on the gland itself
    if probe.degenerate:
        logger.warning("degenerate mutual information (%s); returning zero FFD",
                       probe.flags.get("reason", "unknown"))
        result.ffd = ffd
        result.degenerate = True
        result.final_loss = probe.loss
        return result if full_result else ffd

    scales = np.ones(ffd.params.size)
    best_loss = float("nan")

    levels = []
    for level, (shrink, sigma) in enumerate(config.schedule.levels):
        fl, fsp = _pyramid_level(f_arr, fixed_img.spacing_mm, shrink, sigma)
        ml, msp = _pyramid_level(m_arr, moving_img.spacing_mm, shrink, sigma)
        fm_lvl, _ = _pyramid_level(sampling_mask.astype(np.float64),
                                   fixed_img.spacing_mm, shrink, sigma)
        lvl_mask = fm_lvl > 0.5
        n_samples = int(lvl_mask.sum())
        last_level = level == len(config.schedule.levels) - 1
        if n_samples == 0 and not last_level:
            continue
        if n_samples < _MI_MIN_SAMPLES_PER_BIN * config.mi_bins and not last_level:
            # too few masked samples for a meaningful joint histogram
            logger.debug("skipping pyramid level %d: %d masked samples", level, n_samples)
            continue
        levels.append((level, fl, fsp, ml, msp, lvl_mask))

    # skipped levels donate their iterations to the finest level so the total
    # optimization budget stays at iterations_per_level x n_levels
    budget = config.iterations_per_level * len(config.schedule.levels)
    spare = budget - config.iterations_per_level * len(levels)

    for idx, (level, fl, fsp, ml, msp, lvl_mask) in enumerate(levels):
        iterations = config.iterations_per_level
        if idx == len(levels) - 1:
            iterations += max(0, spare)
        f_lvl = Image2D(pixels=fl, spacing_mm=fsp)
        m_lvl = Image2D(pixels=ml, spacing_mm=msp)
        eta = config.learning_rate * max(fsp)

        def loss_fn(trans, _f=f_lvl, _m=m_lvl, _mask=lvl_mask):
            res = mattes_mi(_f, _m, trans, bins=config.mi_bins, mask=_mask)
            if config.bending_weight > 0:
                pen, pgrad = _bending_penalty(trans.ffd)
                res.loss += config.bending_weight * pen
                res.grad = res.grad + config.bending_weight * pgrad
            return res

        composed, best_loss = _descend(
            loss_fn, ComposedTransform2D(affine_init, ffd), scales, eta,
            iterations, result.trace, level,
            norm="inf", momentum=_FFD_MOMENTUM, max_growth=_FFD_GROWTH)
        ffd = composed.ffd
    result.ffd = ffd
    result.final_loss = best_loss
    return result if full_result else ffd


def _bending_penalty(ffd: FFDTransform2D) -> tuple[float, np.ndarray]:
    """Discrete bending energy of the control lattice.

    Approximates the integral of squared second derivatives with physical
    units (curvature in mm^-1, integrated over grid area), so one weight
    behaves consistently across grids of different cell sizes.
    """
    hx, hy = ffd.grid_spacing_mm
    cell_area = hx * hy
    pen = 0.0
    grads = []
    for coef in (ffd.coef_x, ffd.coef_y):
        g = np.zeros_like(coef)
        for axis, h in ((0, hy), (1, hx)):
            w = cell_area / h ** 4
            d2 = np.diff(coef, n=2, axis=axis)
            pen += w * float((d2 ** 2).sum())
            back = np.zeros_like(coef)
            sl = [slice(None)] * 2
            sl[axis] = slice(0, -2)
            back[tuple(sl)] += d2
            sl[axis] = slice(1, -1)
            back[tuple(sl)] -= 2 * d2
            sl[axis] = slice(2, None)
            back[tuple(sl)] += d2
            g += 2 * w * back
        grads.append(g)
    grad = np.stack([grads[0].ravel(), grads[1].ravel()], axis=1).ravel()
    return pen, grad
