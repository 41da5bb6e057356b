import shutil

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from microfuse.imgio import Image2D
from microfuse.phantom import PhantomSpec, generate_phantom
from microfuse.pipeline import PipelineConfig, run_case


def prostate_mask(h, w, spacing, cx, cy, rx, ry, seed=0):
    """Asymmetric prostate-like blob (an exact ellipse leaves the rotation
    component of an affine unidentifiable from the mask alone)."""
    rng = np.random.default_rng(seed)
    ph2, ph3 = rng.uniform(0, 2 * np.pi, 2)
    yy, xx = np.mgrid[0:h, 0:w]
    x = (xx + 0.5) * spacing - cx
    y = (yy + 0.5) * spacing - cy
    th = np.arctan2(y / ry, x / rx)
    rr = np.hypot(x / rx, y / ry)
    bound = 1.0 + 0.14 * np.sin(2 * th + ph2) + 0.10 * np.sin(3 * th + ph3)
    return (rr <= bound).astype(float)


def smooth_mask_image(h, w, rng, spacing=(0.5, 0.5), sigma=3.5):
    """Gaussian-smoothed random ellipse blob, like a pyramid-level mask."""
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = h / 2 + rng.uniform(-5, 5), w / 2 + rng.uniform(-5, 5)
    ry, rx = h * rng.uniform(0.22, 0.3), w * rng.uniform(0.22, 0.3)
    ang = rng.uniform(0, np.pi)
    xr = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
    yr = -(xx - cx) * np.sin(ang) + (yy - cy) * np.cos(ang)
    m = ((xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0).astype(float)
    return Image2D(pixels=gaussian_filter(m, sigma), spacing_mm=spacing)


def tapered_image(h, w, rng, spacing=(0.5, 0.5)):
    """Smooth random texture that decays to zero at the borders."""
    a = gaussian_filter(rng.normal(size=(h, w)), 3.0)
    a = (a - a.min()) / (a.max() - a.min())
    wy = np.clip(np.minimum(np.arange(h), h - 1 - np.arange(h)) / 12.0, 0, 1)
    wx = np.clip(np.minimum(np.arange(w), w - 1 - np.arange(w)) / 12.0, 0, 1)
    return Image2D(pixels=a * (wy[:, None] * wx[None, :]) ** 2, spacing_mm=spacing)


@pytest.fixture(scope="session")
def phantom_case(tmp_path_factory):
    root = tmp_path_factory.mktemp("cases") / "p0"
    return generate_phantom(PhantomSpec(seed=0), root)


@pytest.fixture(scope="session")
def registered_case(phantom_case):
    report = run_case(PipelineConfig(case_root=phantom_case.root))
    return phantom_case, report


@pytest.fixture()
def case_copy(registered_case, tmp_path):
    layout, _ = registered_case
    dst = tmp_path / "case"
    shutil.copytree(layout.root, dst)
    return dst
