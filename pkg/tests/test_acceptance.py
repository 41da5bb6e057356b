"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
summary lines.
"""

import hashlib
import json
import os
import shutil
import time

import numpy as np
import pytest

from conftest import prostate_mask, smooth_mask_image, tapered_image
from microfuse.imgio import Image2D, Volume3D, load_landmarks
from microfuse.losses import mattes_mi, ssd_loss
from microfuse.metrics import SliceMetrics, aggregate_case, dice, hausdorff, landmark_error, \
    urethra_deviation
from microfuse.phantom import PhantomSpec, generate_phantom
from microfuse.pipeline import PipelineConfig, run_case
from microfuse.reconstruct import ProbeGeometry, VolumeSpec, reconstruct_volume, \
    sample_fan_frames
from microfuse.register import register_affine
from microfuse.transforms import AffineTransform2D, ComposedTransform2D, FFDTransform2D, \
    resample
from test_losses import affine_steps, fd_gradient, rel_err
from test_metrics import TABLE1, _brute_force_hausdorff, _random_blob_mask


@pytest.fixture(scope="module", autouse=True)
def _warm_kernels():
    # one-time numba compilation happens outside the timed criteria
    from microfuse import kernels

    img = np.zeros((4, 4))
    kernels.bilinear(img, np.zeros(1), np.zeros(1), 0.0, 0.0)
    kernels.bilinear_grad(img, np.zeros(1), np.zeros(1), 0.0)
    kernels.nearest(img.astype(np.uint8), np.zeros(1), np.zeros(1), np.uint8(0))
    kernels.fill_volume(np.zeros((1, 4, 4), np.float32), np.zeros(1), 1.0, 0.5,
                        1.0, 1.0, 2, 2, 2, 90.0, True, False)
    kernels.sample_fan(np.zeros((4, 4, 4), np.float32), 1, 1, 1, 0, 0, 0,
                       np.zeros(1), 1.0, 4, 4, 0.5, True)
    kernels.parzen_hist(np.zeros(1, np.int64), np.ones(1) * 2.0, 8)
    kernels.parzen_terms(np.zeros(1, np.int64), np.ones(1) * 2.0, np.zeros((8, 8)))
    kernels.ffd_disp(np.zeros(1), np.zeros(1), np.zeros((4, 4)), np.zeros((4, 4)))
    kernels.ffd_scatter(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), 4, 4)


@pytest.fixture(scope="module")
def acceptance_cases(tmp_path_factory):
    """Four seeded phantom cases -> at least 20 registered slice pairs."""
    root = tmp_path_factory.mktemp("acceptance")
    cases = []
    for seed in range(4):
        layout = generate_phantom(PhantomSpec(seed=seed), root / f"case{seed}")
        cases.append(layout)
    return cases


def test_criterion_1_affine_recovery():
    """Translation (5, -3) mm + rotation 5 deg + scale 1.1 is recovered."""
    sp = 0.4
    ang = np.radians(5.0)
    lin = 1.1 * np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    truth = AffineTransform2D(np.column_stack([lin, [5.0, -3.0]]))
    residuals = []
    elapsed = []
    for seed in range(1, 6):
        mask = prostate_mask(120, 200, sp, 40.0, 22.0, 15.0, 10.0, seed=seed)
        fixed = Image2D(pixels=mask, spacing_mm=(sp, sp))
        moving = resample(fixed, truth.inverse(), (150, 220, (sp, sp)))
        t0 = time.perf_counter()
        got = register_affine(fixed, moving)
        elapsed.append(time.perf_counter() - t0)
        ys, xs = np.nonzero(mask > 0.5)
        pts = np.stack([(xs + 0.5) * sp, (ys + 0.5) * sp], axis=1)
        residuals.append(
            float(np.linalg.norm(got.map_points(pts) - truth.map_points(pts), axis=1).mean()))
    assert max(residuals) < 0.5, residuals
    assert max(elapsed) < 10.0, elapsed
    print(f"\nACCEPTANCE 1 PASS: affine recovery, mean residual "
          f"{max(residuals):.3f} mm < 0.5 mm, {max(elapsed):.2f} s/slice < 10 s")


def test_criterion_2_two_stage_multimodal(acceptance_cases):
    """>=90% of 20 seeded phantom slices reach Dice/HD/LE thresholds."""
    stats = []
    initial_les = []
    for layout in acceptance_cases:
        report = run_case(PipelineConfig(case_root=layout.root))
        micro_lm = load_landmarks(os.path.join(layout.root, "landmarks", "microus.json"))
        hist_lm = load_landmarks(os.path.join(layout.root, "landmarks", "histology.json"))
        with open(os.path.join(layout.root, "output", "report.json")) as f:
            doc = json.load(f)
        for rec in doc["slices"]:
            n, m = rec["slice"], rec["micro_slice"]
            pm = micro_lm.for_slice(m, "anatomical-landmark")[0]
            ph = hist_lm.for_slice(n, "anatomical-landmark")[0]
            initial_les.append(float(np.hypot(pm.x_mm - ph.x_mm, pm.y_mm - ph.y_mm)))
            stats.append((rec["dice"], rec["hd_mm"], rec["le_mm"]))
    stats = stats[:20]
    initial_les = initial_les[:20]
    assert len(stats) == 20
    assert min(initial_les) > 1.5, "recovery must be nontrivial"
    passed = sum(1 for d, hd, le in stats
                 if d >= 0.97 and hd <= 2.0 and le is not None and le <= 1.0)
    assert passed >= 18, f"only {passed}/20 slices passed: {stats}"
    print(f"\nACCEPTANCE 2 PASS: {passed}/20 slices meet Dice>=0.97, HD<=2.0, LE<=1.0 "
          f"(min initial LE {min(initial_les):.1f} mm > 1.5 mm)")


def test_criterion_3_reconstruction_round_trip():
    """Smooth phantom -> 240 fan frames -> volume, MAE <= 2% inside the fan."""
    geom = ProbeGeometry(probe_radius_mm=10.0, frame_height_mm=30.0,
                         frame_width_mm=50.0, pixel_spacing_mm=0.5)
    spec = VolumeSpec(sigma_i=0.4, sigma_t=1.0)
    nx, ny, nz = spec.dims(geom)
    xs = 0.4 * np.arange(nx) - 40.0
    ys = 0.4 * np.arange(ny)
    zs = 1.0 * np.arange(nz)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    field = np.clip(0.5 + 0.3 * np.sin(0.15 * gx) * np.cos(0.12 * gy)
                    + 0.15 * np.sin(0.2 * gz) * np.cos(0.07 * gx), 0, 1).astype(np.float32)
    volume = Volume3D(voxels=field, spacing_mm=(0.4, 0.4, 1.0), origin_mm=(-40.0, 0.0, 0.0))
    t0 = time.perf_counter()
    stack = sample_fan_frames(volume, np.linspace(-90.0, 90.0, 240), geom)
    recon = reconstruct_volume(stack, spec)
    elapsed = time.perf_counter() - t0
    rho = np.hypot(gx, gy)
    in_fan = (rho >= 10.0) & (rho <= 40.0)
    mae = float(np.abs(recon.voxels.astype(np.float64) - field)[in_fan].mean())
    dyn = float(field.max() - field.min())
    out = (rho < 10.0 - 1e-6) | (rho > 40.0 + 1e-6)
    assert mae <= 0.02 * dyn, f"MAE {mae:.4f} vs limit {0.02 * dyn:.4f}"
    assert np.all(recon.voxels[out] == 0.0)
    assert elapsed < 30.0
    print(f"\nACCEPTANCE 3 PASS: round-trip MAE {mae / dyn * 100:.2f}% of range <= 2%, "
          f"out-of-fan exactly 0, {elapsed:.1f} s < 30 s")


def test_criterion_4_metric_oracles():
    """Dice/Hausdorff match brute force on 100 random 64x64 mask pairs."""
    rng = np.random.default_rng(100)
    spacing = (0.6, 0.45)
    worst = 0.0
    for _ in range(100):
        a = _random_blob_mask(rng)
        b = _random_blob_mask(rng)
        na, nb = int(a.sum()), int(b.sum())
        dice_oracle = 1.0 if na + nb == 0 else 2.0 * int((a & b).sum()) / (na + nb)
        assert abs(dice(a, b) - dice_oracle) < 1e-9
        hd_oracle = _brute_force_hausdorff(a, b, spacing)
        worst = max(worst, abs(hausdorff(a, b, spacing) - hd_oracle))
    assert worst < 1e-9
    # hand-computed Euclidean distances
    assert urethra_deviation((0.0, 0.0), (3.0, 4.0)) == 5.0
    assert urethra_deviation((1.5, -2.0), (1.5, -2.0)) == 0.0
    assert landmark_error((0.0, 0.0), (0.0, 2.705)) == 2.705
    assert landmark_error((1.0, 2.0), (4.0, 6.0)) == 5.0
    print(f"\nACCEPTANCE 4 PASS: 100 random mask pairs match brute-force oracles "
          f"(worst Hausdorff delta {worst:.2e} < 1e-9); point metrics exact")


def test_criterion_5_table1_aggregation():
    """The 18 published per-case rows reproduce the published averages."""
    slices = [SliceMetrics(slice_index=i, dice=d, hausdorff_mm=hd,
                           urethra_deviation_mm=ud, landmark_error_mm=le)
              for i, (d, hd, ud, le) in enumerate(TABLE1)]
    means = aggregate_case(slices).means()
    assert round(means["dice"], 3) == 0.965
    assert round(means["hausdorff_mm"], 3) == 1.766
    assert round(means["urethra_deviation_mm"], 1) == 2.2
    assert round(means["landmark_error_mm"], 3) == 2.705
    print("\nACCEPTANCE 5 PASS: Table-1 aggregation reproduces "
          "0.965 / 1.766 / 2.2 / 2.705 at printed precision")


def test_criterion_6_gradient_checks():
    """Analytic vs central-FD gradients agree on >=95% of parameters."""
    rng = np.random.default_rng(600)
    fails = total = 0
    for problem in range(20):
        kind = problem % 3
        if kind == 0:  # SSD on smooth masks, affine parameters
            fixed = smooth_mask_image(80, 90, rng)
            moving = smooth_mask_image(85, 95, rng)
            t = AffineTransform2D(np.eye(2, 3) + rng.normal(0, 0.02, (2, 3))
                                  * np.array([[1, 1, 2], [1, 1, 2]]))
            loss_fn = lambda tt: ssd_loss(fixed, moving, tt)
            g = loss_fn(t).grad
            fd = fd_gradient(loss_fn, t, affine_steps(base=1e-5))
            keep = (np.abs(g) > 1e-8) | (np.abs(fd) > 1e-8)
            fails += int((rel_err(g[keep], fd[keep]) > 1e-3).sum())
            total += int(keep.sum())
        else:
            fixed = tapered_image(80, 90, rng)
            moving = tapered_image(85, 95, rng)
            mask = fixed.pixels > 0.15
            t = AffineTransform2D(np.eye(2, 3) + rng.normal(0, 0.02, (2, 3))
                                  * np.array([[1, 1, 8], [1, 1, 8]]))
            loss_fn = lambda tt: mattes_mi(fixed, moving, tt, 32, mask)
            if kind == 1:  # MI, affine parameters
                g = loss_fn(t).grad
                fd = fd_gradient(loss_fn, t, affine_steps(base=1e-6))
                keep = (np.abs(g) > 1e-8) | (np.abs(fd) > 1e-8)
                fails += int((rel_err(g[keep], fd[keep]) > 1e-3).sum())
                total += int(keep.sum())
            else:  # MI, FFD control displacements
                ffd = FFDTransform2D.zeros_for_domain((0, 45), (0, 40), (6.0, 6.0))
                ffd = ffd.with_params(rng.normal(0, 0.4, ffd.params.size))
                comp = ComposedTransform2D(t, ffd)
                g = loss_fn(comp).grad
                p0 = comp.params
                for i in rng.choice(p0.size, 20, replace=False):
                    pp = p0.copy()
                    pp[i] += 1e-5
                    pm = p0.copy()
                    pm[i] -= 1e-5
                    fd_i = (loss_fn(comp.with_params(pp)).loss
                            - loss_fn(comp.with_params(pm)).loss) / 2e-5
                    if abs(g[i]) < 1e-8 and abs(fd_i) < 1e-8:
                        continue
                    total += 1
                    if abs(g[i] - fd_i) / max(abs(g[i]), abs(fd_i)) > 1e-3:
                        fails += 1
    frac = 1.0 - fails / total
    assert frac >= 0.95, f"{fails}/{total} parameters disagree"
    print(f"\nACCEPTANCE 6 PASS: gradients agree on {frac * 100:.1f}% of {total} "
          f"sampled parameters (>= 95%)")


def _output_digest(root):
    h = hashlib.sha256()
    out = os.path.join(root, "output")
    for dirpath, dirs, files in sorted(os.walk(out)):
        dirs.sort()
        for f in sorted(files):
            p = os.path.join(dirpath, f)
            h.update(os.path.relpath(p, out).encode())
            h.update(open(p, "rb").read())
    return h.hexdigest()


def test_criterion_7_pipeline_determinism(acceptance_cases, tmp_path):
    """Two runs on the same phantom case are bitwise identical."""
    src = acceptance_cases[0].root
    work = tmp_path / "det"
    shutil.copytree(src, work)
    shutil.rmtree(work / "output")
    run_case(PipelineConfig(case_root=str(work)))
    first = _output_digest(str(work))
    shutil.rmtree(work / "output")
    run_case(PipelineConfig(case_root=str(work)))
    second = _output_digest(str(work))
    assert first == second
    print(f"\nACCEPTANCE 7 PASS: transforms, overlays and reports bitwise identical "
          f"across reruns (sha256 {first[:12]})")
