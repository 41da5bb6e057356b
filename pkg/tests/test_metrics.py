import numpy as np
import pytest

from microfuse.imgio import ValidationError
from microfuse.metrics import (
    SliceMetrics,
    aggregate_case,
    center_of_mass,
    dice,
    hausdorff,
    landmark_error,
    urethra_deviation,
)

# Published per-case rows: (dice, hausdorff_mm, urethra_deviation_mm, landmark_error_mm)
TABLE1 = [
    (0.96, 1.538, 4.057, 4.711),
    (0.961, 1.479, 1.758, 4.141),
    (0.972, 1.324, 2.296, 4.542),
    (0.973, 2.386, 1.508, 2.211),
    (0.964, 1.105, 2.129, 2.264),
    (0.968, 1.755, 1.544, 2.389),
    (0.968, 1.519, 1.609, 2.85),
    (0.967, 1.462, 1.431, 0.984),
    (0.977, 0.959, 2.438, 3.038),
    (0.952, 2.557, 1.552, 1.828),
    (0.945, 2.541, 1.255, 2.737),
    (0.953, 3.267, 2.109, 3.442),
    (0.973, 2.003, 2.609, 2.261),
    (0.956, 2.222, 3.749, 2.256),
    (0.965, 1.599, 2.017, 1.728),
    (0.973, 1.232, 2.183, 2.856),
    (0.978, 1.296, 2.515, 2.361),
    (0.962, 1.549, 2.83, 2.091),
]


def _random_blob_mask(rng, n=64):
    mask = np.zeros((n, n), bool)
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(12, n - 12, 2)
        ry, rx = rng.uniform(4, 12, 2)
        yy, xx = np.mgrid[0:n, 0:n]
        mask |= ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    return mask


def test_dice_identical():
    m = _random_blob_mask(np.random.default_rng(0))
    assert dice(m, m) == 1.0


def test_dice_disjoint():
    a = np.zeros((10, 10), bool)
    b = np.zeros((10, 10), bool)
    a[1:3, 1:3] = True
    b[6:8, 6:8] = True
    assert dice(a, b) == 0.0


def test_dice_half_overlap():
    # 4-pixel squares sharing exactly 2 pixels -> 2*2/(4+4) = 0.5
    a = np.zeros((6, 6), bool)
    b = np.zeros((6, 6), bool)
    a[2:4, 1:3] = True
    b[2:4, 2:4] = True
    assert dice(a, b) == 0.5


def test_dice_empty_conventions():
    z = np.zeros((5, 5), bool)
    m = ~z
    assert dice(z, z) == 1.0
    assert dice(z, m) == 0.0


def test_dice_grid_mismatch():
    with pytest.raises(ValidationError):
        dice(np.zeros((4, 4), bool), np.zeros((5, 5), bool))


def test_dice_symmetry_and_shift_invariance():
    rng = np.random.default_rng(1)
    a = _random_blob_mask(rng)
    b = _random_blob_mask(rng)
    assert dice(a, b) == dice(b, a)
    assert dice(np.roll(a, (3, -2), (0, 1)), np.roll(b, (3, -2), (0, 1))) == dice(a, b)


def test_hausdorff_identical_zero():
    m = _random_blob_mask(np.random.default_rng(2))
    assert hausdorff(m, m, (0.5, 0.5)) == 0.0


def test_hausdorff_single_pixels_5mm():
    a = np.zeros((12, 12), bool)
    b = np.zeros((12, 12), bool)
    a[2, 2] = True
    b[2, 7] = True  # 5 px at 1.0 mm spacing
    assert hausdorff(a, b, (1.0, 1.0)) == 5.0


def test_hausdorff_empty_rejected():
    m = _random_blob_mask(np.random.default_rng(3))
    with pytest.raises(ValidationError):
        hausdorff(m, np.zeros_like(m), (1, 1))


def _brute_force_hausdorff(a, b, spacing):
    """O(n^2) oracle with its own boundary extraction (explicit loops)."""

    def boundary(mask):
        pts = []
        h, w = mask.shape
        for r in range(h):
            for c in range(w):
                if not mask[r, c]:
                    continue
                edge = r == 0 or r == h - 1 or c == 0 or c == w - 1
                if not edge:
                    edge = not (mask[r - 1, c] and mask[r + 1, c]
                                and mask[r, c - 1] and mask[r, c + 1])
                if edge:
                    pts.append(((c + 0.5) * spacing[0], (r + 0.5) * spacing[1]))
        return pts

    pa = boundary(a)
    pb = boundary(b)

    def directed(ps, qs):
        worst = 0.0
        for x1, y1 in ps:
            best = min(((x1 - x2) ** 2 + (y1 - y2) ** 2) for x2, y2 in qs)
            worst = max(worst, best)
        return worst ** 0.5

    return max(directed(pa, pb), directed(pb, pa))


def test_hausdorff_matches_brute_force_oracle():
    rng = np.random.default_rng(4)
    spacing = (0.7, 0.4)
    for _ in range(50):
        a = _random_blob_mask(rng)
        b = _random_blob_mask(rng)
        got = hausdorff(a, b, spacing)
        want = _brute_force_hausdorff(a, b, spacing)
        assert abs(got - want) < 1e-9


def test_hausdorff_symmetric_and_triangle():
    rng = np.random.default_rng(5)
    a = _random_blob_mask(rng)
    b = _random_blob_mask(rng)
    c = _random_blob_mask(rng)
    sp = (1.0, 1.0)
    assert hausdorff(a, b, sp) == hausdorff(b, a, sp)
    assert hausdorff(a, c, sp) <= hausdorff(a, b, sp) + hausdorff(b, c, sp) + 1e-12


def test_hausdorff_directed_values():
    rng = np.random.default_rng(6)
    a = _random_blob_mask(rng)
    b = _random_blob_mask(rng)
    full, dij, dji = hausdorff(a, b, (1, 1), return_directed=True)
    assert full == max(dij, dji)


def test_point_distances():
    assert urethra_deviation((0.0, 0.0), (3.0, 4.0)) == 5.0
    assert urethra_deviation((1.0, 2.0), (1.0, 2.0)) == 0.0
    assert landmark_error((1.0, 1.0), (1.0, 1.0)) == 0.0
    assert landmark_error((0.0, 0.0), (0.0, 2.705)) == 2.705
    assert landmark_error((1.0, 4.0), (-2.0, 0.5)) == landmark_error((-2.0, 0.5), (1.0, 4.0))


def test_centroid_translation():
    rng = np.random.default_rng(7)
    m = _random_blob_mask(rng)
    sp = (0.5, 0.5)
    cx, cy = center_of_mass(m, sp)
    shifted = np.roll(m, (0, 4), (0, 1))
    cx2, cy2 = center_of_mass(shifted, sp)
    assert abs((cx2 - cx) - 4 * 0.5) < 1e-9 and abs(cy2 - cy) < 1e-9


def test_aggregate_single_slice():
    s = SliceMetrics(slice_index=0, dice=0.9, hausdorff_mm=1.5,
                     urethra_deviation_mm=2.0, landmark_error_mm=None)
    report = aggregate_case([s])
    means = report.means()
    assert means["dice"] == 0.9
    assert means["hausdorff_mm"] == 1.5
    assert means["urethra_deviation_mm"] == 2.0
    assert means["landmark_error_mm"] is None
    assert means["n_landmark_error_mm"] == 0


def test_aggregate_empty_rejected():
    with pytest.raises(ValidationError):
        aggregate_case([])


def test_aggregate_means_within_range():
    rng = np.random.default_rng(8)
    slices = [SliceMetrics(slice_index=i, dice=float(rng.uniform(0.8, 1.0)),
                           hausdorff_mm=float(rng.uniform(0.5, 3.0)))
              for i in range(10)]
    means = aggregate_case(slices).means()
    dvals = [s.dice for s in slices]
    assert min(dvals) <= means["dice"] <= max(dvals)


def test_table1_published_averages():
    slices = [SliceMetrics(slice_index=i, dice=d, hausdorff_mm=hd,
                           urethra_deviation_mm=ud, landmark_error_mm=le)
              for i, (d, hd, ud, le) in enumerate(TABLE1)]
    means = aggregate_case(slices).means()
    assert round(means["dice"], 3) == 0.965
    assert round(means["hausdorff_mm"], 3) == 1.766
    assert round(means["urethra_deviation_mm"], 1) == 2.2
    assert round(means["landmark_error_mm"], 3) == 2.705
