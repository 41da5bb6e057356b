"""Hot numeric kernels: scalar-loop numba variants plus vectorized NumPy fallbacks.

Every public name here is bound to one of two implementations at import time:
``_<name>_numba`` (scalar loops under ``@njit``) when numba is active, or
``_<name>_numpy`` (vectorized) when ``MICROFUSE_NO_NUMBA=1`` or numba is
missing. Both variants are kept importable so tests can assert they agree
and ``benchmarks/bench_kernels.py`` can time them head to head.

Index-space sampling convention: a caller converts physical mm to fractional
(row, col) indices first; ``edge`` extends the valid domain past the outermost
pixel centers (0.5 = clamp up to the pixel edge, 0.0 = centers only). Outside
the domain the fill value is returned and gradients are zero.
"""

from __future__ import annotations

import math

import numpy as np

from .accel import USE_NUMBA, njit

_EPS = 1e-7


# ---------------------------------------------------------------------------
# Bilinear image sampling


def _bilinear_numpy(img, rows, cols, fill, edge):
    h, w = img.shape
    ok = (rows >= -edge - _EPS) & (rows <= h - 1 + edge + _EPS) \
        & (cols >= -edge - _EPS) & (cols <= w - 1 + edge + _EPS)
    rr = np.clip(rows, 0.0, h - 1.0)
    cc = np.clip(cols, 0.0, w - 1.0)
    r0 = np.clip(np.floor(rr).astype(np.int64), 0, max(h - 2, 0))
    c0 = np.clip(np.floor(cc).astype(np.int64), 0, max(w - 2, 0))
    fr = rr - r0
    fc = cc - c0
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    val = ((1 - fr) * (1 - fc) * img[r0, c0] + (1 - fr) * fc * img[r0, c1]
           + fr * (1 - fc) * img[r1, c0] + fr * fc * img[r1, c1])
    return np.where(ok, val, fill)


def _bilinear_loops(img, rows, cols, fill, edge):
    h, w = img.shape
    n = rows.size
    out = np.empty(n, dtype=np.float64)
    for s in range(n):
        rr = rows[s]
        cc = cols[s]
        if (rr < -edge - _EPS or rr > h - 1 + edge + _EPS
                or cc < -edge - _EPS or cc > w - 1 + edge + _EPS):
            out[s] = fill
            continue
        if rr < 0.0:
            rr = 0.0
        elif rr > h - 1.0:
            rr = h - 1.0
        if cc < 0.0:
            cc = 0.0
        elif cc > w - 1.0:
            cc = w - 1.0
        r0 = int(math.floor(rr))
        if r0 > h - 2:
            r0 = h - 2
        if r0 < 0:
            r0 = 0
        c0 = int(math.floor(cc))
        if c0 > w - 2:
            c0 = w - 2
        if c0 < 0:
            c0 = 0
        fr = rr - r0
        fc = cc - c0
        r1 = r0 + 1 if r0 + 1 < h else h - 1
        c1 = c0 + 1 if c0 + 1 < w else w - 1
        out[s] = ((1 - fr) * (1 - fc) * img[r0, c0] + (1 - fr) * fc * img[r0, c1]
                  + fr * (1 - fc) * img[r1, c0] + fr * fc * img[r1, c1])
    return out


def _bilinear_grad_numpy(img, rows, cols, fill):
    h, w = img.shape
    ok = (rows >= -_EPS) & (rows <= h - 1 + _EPS) & (cols >= -_EPS) & (cols <= w - 1 + _EPS)
    rr = np.clip(rows, 0.0, h - 1.0)
    cc = np.clip(cols, 0.0, w - 1.0)
    r0 = np.clip(np.floor(rr).astype(np.int64), 0, max(h - 2, 0))
    c0 = np.clip(np.floor(cc).astype(np.int64), 0, max(w - 2, 0))
    fr = rr - r0
    fc = cc - c0
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    v00 = img[r0, c0]
    v01 = img[r0, c1]
    v10 = img[r1, c0]
    v11 = img[r1, c1]
    val = (1 - fr) * (1 - fc) * v00 + (1 - fr) * fc * v01 + fr * (1 - fc) * v10 + fr * fc * v11
    drow = (1 - fc) * (v10 - v00) + fc * (v11 - v01)
    dcol = (1 - fr) * (v01 - v00) + fr * (v11 - v10)
    return (np.where(ok, val, fill), np.where(ok, drow, 0.0), np.where(ok, dcol, 0.0))


def _bilinear_grad_loops(img, rows, cols, fill):
    h, w = img.shape
    n = rows.size
    val = np.empty(n, dtype=np.float64)
    drow = np.zeros(n, dtype=np.float64)
    dcol = np.zeros(n, dtype=np.float64)
    for s in range(n):
        rr = rows[s]
        cc = cols[s]
        if rr < -_EPS or rr > h - 1 + _EPS or cc < -_EPS or cc > w - 1 + _EPS:
            val[s] = fill
            continue
        if rr < 0.0:
            rr = 0.0
        elif rr > h - 1.0:
            rr = h - 1.0
        if cc < 0.0:
            cc = 0.0
        elif cc > w - 1.0:
            cc = w - 1.0
        r0 = int(math.floor(rr))
        if r0 > h - 2:
            r0 = h - 2
        if r0 < 0:
            r0 = 0
        c0 = int(math.floor(cc))
        if c0 > w - 2:
            c0 = w - 2
        if c0 < 0:
            c0 = 0
        fr = rr - r0
        fc = cc - c0
        r1 = r0 + 1 if r0 + 1 < h else h - 1
        c1 = c0 + 1 if c0 + 1 < w else w - 1
        v00 = img[r0, c0]
        v01 = img[r0, c1]
        v10 = img[r1, c0]
        v11 = img[r1, c1]
        val[s] = (1 - fr) * (1 - fc) * v00 + (1 - fr) * fc * v01 \
            + fr * (1 - fc) * v10 + fr * fc * v11
        drow[s] = (1 - fc) * (v10 - v00) + fc * (v11 - v01)
        dcol[s] = (1 - fr) * (v01 - v00) + fr * (v11 - v10)
    return val, drow, dcol


def _nearest_numpy(img, rows, cols, fill):
    h, w = img.shape
    ri = np.rint(rows).astype(np.int64)
    ci = np.rint(cols).astype(np.int64)
    ok = (ri >= 0) & (ri <= h - 1) & (ci >= 0) & (ci <= w - 1)
    out = np.full(rows.shape, fill, dtype=img.dtype)
    out[ok] = img[ri[ok], ci[ok]]
    return out


def _nearest_loops(img, rows, cols, fill):
    h, w = img.shape
    n = rows.size
    out = np.empty(n, dtype=img.dtype)
    for s in range(n):
        ri = int(round(rows[s]))
        ci = int(round(cols[s]))
        if 0 <= ri < h and 0 <= ci < w:
            out[s] = img[ri, ci]
        else:
            out[s] = fill
    return out


# ---------------------------------------------------------------------------
# Fan-beam volume fill (reconstruction inner loop)


def _fill_volume_loops(frames, angles_deg, probe_radius, pixel_spacing,
                       sigma_i, sigma_t, nlr, npa, nsi, max_gap_deg,
                       offset_radius, nearest):
    nframes, fh, fw = frames.shape
    h = fh * pixel_spacing
    extent = h + probe_radius
    vol = np.zeros((nlr, npa, nsi), dtype=np.float32)
    for i in range(nlr):
        x = sigma_i * i - extent
        for j in range(npa):
            y = sigma_i * j
            rho = math.sqrt(x * x + y * y)
            if rho < probe_radius - 1e-9 or rho > extent + 1e-9:
                continue
            theta = math.degrees(math.atan2(x, y))
            # nearest-angle frame over the sorted stack
            idx = np.searchsorted(angles_deg, theta)
            if idx >= nframes:
                idx = nframes - 1
            elif idx > 0 and theta - angles_deg[idx - 1] <= angles_deg[idx] - theta:
                idx = idx - 1
            if abs(angles_deg[idx] - theta) > max_gap_deg:
                continue
            if offset_radius:
                from_top = h - (rho - probe_radius)
            else:
                from_top = h - rho
            rr = from_top / pixel_spacing - 0.5
            if rr < -0.5 - _EPS or rr > fh - 0.5 + _EPS:
                continue
            if rr < 0.0:
                rr = 0.0
            elif rr > fh - 1.0:
                rr = fh - 1.0
            r0 = int(math.floor(rr))
            if r0 > fh - 2:
                r0 = fh - 2
            if r0 < 0:
                r0 = 0
            fr = rr - r0
            r1 = r0 + 1 if r0 + 1 < fh else fh - 1
            if nearest:
                rn = int(round(rr))
                for k in range(nsi):
                    cc = (sigma_t * k) / pixel_spacing - 0.5
                    if cc < -0.5 - _EPS or cc > fw - 0.5 + _EPS:
                        continue
                    cn = int(round(cc))
                    if cn < 0:
                        cn = 0
                    elif cn > fw - 1:
                        cn = fw - 1
                    vol[i, j, k] = frames[idx, rn, cn]
            else:
                for k in range(nsi):
                    cc = (sigma_t * k) / pixel_spacing - 0.5
                    if cc < -0.5 - _EPS or cc > fw - 0.5 + _EPS:
                        continue
                    if cc < 0.0:
                        cc = 0.0
                    elif cc > fw - 1.0:
                        cc = fw - 1.0
                    c0 = int(math.floor(cc))
                    if c0 > fw - 2:
                        c0 = fw - 2
                    if c0 < 0:
                        c0 = 0
                    fc = cc - c0
                    c1 = c0 + 1 if c0 + 1 < fw else fw - 1
                    vol[i, j, k] = ((1 - fr) * (1 - fc) * frames[idx, r0, c0]
                                    + (1 - fr) * fc * frames[idx, r0, c1]
                                    + fr * (1 - fc) * frames[idx, r1, c0]
                                    + fr * fc * frames[idx, r1, c1])
    return vol


def _fill_volume_numpy(frames, angles_deg, probe_radius, pixel_spacing,
                       sigma_i, sigma_t, nlr, npa, nsi, max_gap_deg,
                       offset_radius, nearest):
    nframes, fh, fw = frames.shape
    h = fh * pixel_spacing
    extent = h + probe_radius

    x = sigma_i * np.arange(nlr) - extent
    y = sigma_i * np.arange(npa)
    xx, yy = np.meshgrid(x, y, indexing="ij")  # (nlr, npa)
    rho = np.hypot(xx, yy)
    theta = np.degrees(np.arctan2(xx, yy))

    idx = np.searchsorted(angles_deg, theta)
    idx = np.clip(idx, 0, nframes - 1)
    left = np.clip(idx - 1, 0, nframes - 1)
    take_left = (idx > 0) & (theta - angles_deg[left] <= angles_deg[idx] - theta)
    idx = np.where(take_left, left, idx)

    in_fan = (rho >= probe_radius - 1e-9) & (rho <= extent + 1e-9)
    in_fan &= np.abs(angles_deg[idx] - theta) <= max_gap_deg

    from_top = h - (rho - probe_radius) if offset_radius else h - rho
    rr = from_top / pixel_spacing - 0.5
    in_fan &= (rr >= -0.5 - _EPS) & (rr <= fh - 0.5 + _EPS)
    rr = np.clip(rr, 0.0, fh - 1.0)

    cc = (sigma_t * np.arange(nsi)) / pixel_spacing - 0.5
    cc_ok = (cc >= -0.5 - _EPS) & (cc <= fw - 0.5 + _EPS)
    cc = np.clip(cc, 0.0, fw - 1.0)

    fidx = idx[:, :, None]
    if nearest:
        rn = np.rint(rr).astype(np.int64)[:, :, None]
        cn = np.rint(cc).astype(np.int64)[None, None, :]
        vals = frames[fidx, rn, cn].astype(np.float32)
    else:
        r0 = np.clip(np.floor(rr).astype(np.int64), 0, max(fh - 2, 0))
        fr = (rr - r0)[:, :, None]
        r0 = r0[:, :, None]
        r1 = np.minimum(r0 + 1, fh - 1)
        c0 = np.clip(np.floor(cc).astype(np.int64), 0, max(fw - 2, 0))
        fc = (cc - c0)[None, None, :]
        c0 = c0[None, None, :]
        c1 = np.minimum(c0 + 1, fw - 1)
        vals = ((1 - fr) * (1 - fc) * frames[fidx, r0, c0]
                + (1 - fr) * fc * frames[fidx, r0, c1]
                + fr * (1 - fc) * frames[fidx, r1, c0]
                + fr * fc * frames[fidx, r1, c1]).astype(np.float32)
    vals *= in_fan[:, :, None]
    vals *= cc_ok[None, None, :]
    return vals


# ---------------------------------------------------------------------------
# Inverse fan sampler (volume -> oblique frames)


def _sample_fan_loops(vol, sx, sy, sz, ox, oy, oz, angles_deg, probe_radius,
                      fh, fw, pixel_spacing, offset_radius):
    nx, ny, nz = vol.shape
    h = fh * pixel_spacing
    out = np.zeros((angles_deg.size, fh, fw), dtype=np.float32)
    for f in range(angles_deg.size):
        st = math.sin(math.radians(angles_deg[f]))
        ct = math.cos(math.radians(angles_deg[f]))
        for ri in range(fh):
            from_bottom = h - (ri + 0.5) * pixel_spacing
            rho = from_bottom + probe_radius if offset_radius else from_bottom
            x = rho * st
            y = rho * ct
            fx = (x - ox) / sx
            fy = (y - oy) / sy
            if fx < -0.5 - _EPS or fx > nx - 0.5 + _EPS or fy < -0.5 - _EPS or fy > ny - 0.5 + _EPS:
                continue
            if fx < 0.0:
                fx = 0.0
            elif fx > nx - 1.0:
                fx = nx - 1.0
            if fy < 0.0:
                fy = 0.0
            elif fy > ny - 1.0:
                fy = ny - 1.0
            ix0 = int(math.floor(fx))
            if ix0 > nx - 2:
                ix0 = nx - 2
            if ix0 < 0:
                ix0 = 0
            iy0 = int(math.floor(fy))
            if iy0 > ny - 2:
                iy0 = ny - 2
            if iy0 < 0:
                iy0 = 0
            wx = fx - ix0
            wy = fy - iy0
            ix1 = ix0 + 1 if ix0 + 1 < nx else nx - 1
            iy1 = iy0 + 1 if iy0 + 1 < ny else ny - 1
            for ci in range(fw):
                z = (ci + 0.5) * pixel_spacing
                fz = (z - oz) / sz
                if fz < -0.5 - _EPS or fz > nz - 0.5 + _EPS:
                    continue
                if fz < 0.0:
                    fz = 0.0
                elif fz > nz - 1.0:
                    fz = nz - 1.0
                iz0 = int(math.floor(fz))
                if iz0 > nz - 2:
                    iz0 = nz - 2
                if iz0 < 0:
                    iz0 = 0
                wz = fz - iz0
                iz1 = iz0 + 1 if iz0 + 1 < nz else nz - 1
                c00 = vol[ix0, iy0, iz0] * (1 - wz) + vol[ix0, iy0, iz1] * wz
                c01 = vol[ix0, iy1, iz0] * (1 - wz) + vol[ix0, iy1, iz1] * wz
                c10 = vol[ix1, iy0, iz0] * (1 - wz) + vol[ix1, iy0, iz1] * wz
                c11 = vol[ix1, iy1, iz0] * (1 - wz) + vol[ix1, iy1, iz1] * wz
                out[f, ri, ci] = ((1 - wx) * ((1 - wy) * c00 + wy * c01)
                                  + wx * ((1 - wy) * c10 + wy * c11))
    return out


def _sample_fan_numpy(vol, sx, sy, sz, ox, oy, oz, angles_deg, probe_radius,
                      fh, fw, pixel_spacing, offset_radius):
    nx, ny, nz = vol.shape
    h = fh * pixel_spacing
    out = np.zeros((angles_deg.size, fh, fw), dtype=np.float32)

    from_bottom = h - (np.arange(fh) + 0.5) * pixel_spacing
    rho = from_bottom + probe_radius if offset_radius else from_bottom
    z = (np.arange(fw) + 0.5) * pixel_spacing
    fz = (z - oz) / sz
    okz = (fz >= -0.5 - _EPS) & (fz <= nz - 0.5 + _EPS)
    fz = np.clip(fz, 0.0, nz - 1.0)
    iz0 = np.clip(np.floor(fz).astype(np.int64), 0, max(nz - 2, 0))
    wz = fz - iz0
    iz1 = np.minimum(iz0 + 1, nz - 1)

    for f in range(angles_deg.size):
        st = math.sin(math.radians(angles_deg[f]))
        ct = math.cos(math.radians(angles_deg[f]))
        fx = (rho * st - ox) / sx
        fy = (rho * ct - oy) / sy
        okxy = (fx >= -0.5 - _EPS) & (fx <= nx - 0.5 + _EPS) \
            & (fy >= -0.5 - _EPS) & (fy <= ny - 0.5 + _EPS)
        fx = np.clip(fx, 0.0, nx - 1.0)
        fy = np.clip(fy, 0.0, ny - 1.0)
        ix0 = np.clip(np.floor(fx).astype(np.int64), 0, max(nx - 2, 0))
        iy0 = np.clip(np.floor(fy).astype(np.int64), 0, max(ny - 2, 0))
        wx = (fx - ix0)[:, None]
        wy = (fy - iy0)[:, None]
        ix1 = np.minimum(ix0 + 1, nx - 1)
        iy1 = np.minimum(iy0 + 1, ny - 1)
        a0, a1 = ix0[:, None], ix1[:, None]
        b0, b1 = iy0[:, None], iy1[:, None]
        c00 = vol[a0, b0, iz0] * (1 - wz) + vol[a0, b0, iz1] * wz
        c01 = vol[a0, b1, iz0] * (1 - wz) + vol[a0, b1, iz1] * wz
        c10 = vol[a1, b0, iz0] * (1 - wz) + vol[a1, b0, iz1] * wz
        c11 = vol[a1, b1, iz0] * (1 - wz) + vol[a1, b1, iz1] * wz
        plane = (1 - wx) * ((1 - wy) * c00 + wy * c01) + wx * ((1 - wy) * c10 + wy * c11)
        plane *= okxy[:, None]
        plane *= okz[None, :]
        out[f] = plane.astype(np.float32)
    return out


# ---------------------------------------------------------------------------
# Mattes mutual information: cubic Parzen joint histogram and gradient terms


def _parzen_hist_loops(fixed_bin, tm, nbins):
    hist = np.zeros((nbins, nbins), dtype=np.float64)
    for s in range(tm.size):
        u = fixed_bin[s]
        t = tm[s]
        b0 = int(math.floor(t))
        fv = t - b0
        om = 1.0 - fv
        hist[u, b0 - 1] += om * om * om / 6.0
        hist[u, b0] += (3.0 * fv * fv * fv - 6.0 * fv * fv + 4.0) / 6.0
        hist[u, b0 + 1] += (-3.0 * fv * fv * fv + 3.0 * fv * fv + 3.0 * fv + 1.0) / 6.0
        hist[u, b0 + 2] += fv * fv * fv / 6.0
    return hist


def _parzen_hist_numpy(fixed_bin, tm, nbins):
    b0 = np.floor(tm).astype(np.int64)
    fv = tm - b0
    om = 1.0 - fv
    w = np.stack([
        om ** 3 / 6.0,
        (3.0 * fv ** 3 - 6.0 * fv ** 2 + 4.0) / 6.0,
        (-3.0 * fv ** 3 + 3.0 * fv ** 2 + 3.0 * fv + 1.0) / 6.0,
        fv ** 3 / 6.0,
    ])
    hist = np.zeros(nbins * nbins, dtype=np.float64)
    for d in range(4):
        np.add.at(hist, fixed_bin * nbins + b0 - 1 + d, w[d])
    return hist.reshape(nbins, nbins)


def _parzen_terms_loops(fixed_bin, tm, table):
    out = np.empty(tm.size, dtype=np.float64)
    for s in range(tm.size):
        u = fixed_bin[s]
        t = tm[s]
        b0 = int(math.floor(t))
        fv = t - b0
        om = 1.0 - fv
        dm1 = -om * om / 2.0
        d0 = (3.0 * fv * fv - 4.0 * fv) / 2.0
        d1 = (-3.0 * fv * fv + 2.0 * fv + 1.0) / 2.0
        d2 = fv * fv / 2.0
        out[s] = (dm1 * table[u, b0 - 1] + d0 * table[u, b0]
                  + d1 * table[u, b0 + 1] + d2 * table[u, b0 + 2])
    return out


def _parzen_terms_numpy(fixed_bin, tm, table):
    b0 = np.floor(tm).astype(np.int64)
    fv = tm - b0
    om = 1.0 - fv
    flat = table.ravel()
    base = fixed_bin * table.shape[1] + b0
    return (-om ** 2 / 2.0 * flat[base - 1]
            + (3.0 * fv ** 2 - 4.0 * fv) / 2.0 * flat[base]
            + (-3.0 * fv ** 2 + 2.0 * fv + 1.0) / 2.0 * flat[base + 1]
            + fv ** 2 / 2.0 * flat[base + 2])


# ---------------------------------------------------------------------------
# Cubic B-spline free-form deformation: evaluation and gradient scatter
#
# tx, ty are grid-index coordinates (control point a sits at index a); control
# coefficients outside the grid are treated as zero, so the displacement decays
# smoothly to zero outside the modeled region.


def _bspline_w(fv):
    om = 1.0 - fv
    return (om * om * om / 6.0,
            (3.0 * fv * fv * fv - 6.0 * fv * fv + 4.0) / 6.0,
            (-3.0 * fv * fv * fv + 3.0 * fv * fv + 3.0 * fv + 1.0) / 6.0,
            fv * fv * fv / 6.0)


def _ffd_disp_loops(tx, ty, coef_x, coef_y):
    ncy, ncx = coef_x.shape
    n = tx.size
    dx = np.zeros(n, dtype=np.float64)
    dy = np.zeros(n, dtype=np.float64)
    for s in range(n):
        bx = int(math.floor(tx[s]))
        by = int(math.floor(ty[s]))
        fx = tx[s] - bx
        fy = ty[s] - by
        omx = 1.0 - fx
        omy = 1.0 - fy
        wx0 = omx * omx * omx / 6.0
        wx1 = (3.0 * fx * fx * fx - 6.0 * fx * fx + 4.0) / 6.0
        wx2 = (-3.0 * fx * fx * fx + 3.0 * fx * fx + 3.0 * fx + 1.0) / 6.0
        wx3 = fx * fx * fx / 6.0
        wy0 = omy * omy * omy / 6.0
        wy1 = (3.0 * fy * fy * fy - 6.0 * fy * fy + 4.0) / 6.0
        wy2 = (-3.0 * fy * fy * fy + 3.0 * fy * fy + 3.0 * fy + 1.0) / 6.0
        wy3 = fy * fy * fy / 6.0
        accx = 0.0
        accy = 0.0
        for b in range(4):
            iy = by - 1 + b
            if iy < 0 or iy >= ncy:
                continue
            if b == 0:
                wyv = wy0
            elif b == 1:
                wyv = wy1
            elif b == 2:
                wyv = wy2
            else:
                wyv = wy3
            for a in range(4):
                ix = bx - 1 + a
                if ix < 0 or ix >= ncx:
                    continue
                if a == 0:
                    wv = wx0
                elif a == 1:
                    wv = wx1
                elif a == 2:
                    wv = wx2
                else:
                    wv = wx3
                wgt = wyv * wv
                accx += wgt * coef_x[iy, ix]
                accy += wgt * coef_y[iy, ix]
        dx[s] = accx
        dy[s] = accy
    return dx, dy


def _ffd_disp_numpy(tx, ty, coef_x, coef_y):
    ncy, ncx = coef_x.shape
    bx = np.floor(tx).astype(np.int64)
    by = np.floor(ty).astype(np.int64)
    wx = _bspline_w(tx - bx)
    wy = _bspline_w(ty - by)
    dx = np.zeros(tx.shape, dtype=np.float64)
    dy = np.zeros(tx.shape, dtype=np.float64)
    for b in range(4):
        iy = by - 1 + b
        oky = (iy >= 0) & (iy < ncy)
        iyc = np.clip(iy, 0, ncy - 1)
        for a in range(4):
            ix = bx - 1 + a
            ok = oky & (ix >= 0) & (ix < ncx)
            ixc = np.clip(ix, 0, ncx - 1)
            wgt = wy[b] * wx[a] * ok
            dx += wgt * coef_x[iyc, ixc]
            dy += wgt * coef_y[iyc, ixc]
    return dx, dy


def _ffd_scatter_loops(tx, ty, beta_x, beta_y, ncx, ncy):
    gx = np.zeros((ncy, ncx), dtype=np.float64)
    gy = np.zeros((ncy, ncx), dtype=np.float64)
    for s in range(tx.size):
        bx = int(math.floor(tx[s]))
        by = int(math.floor(ty[s]))
        fx = tx[s] - bx
        fy = ty[s] - by
        omx = 1.0 - fx
        omy = 1.0 - fy
        wx0 = omx * omx * omx / 6.0
        wx1 = (3.0 * fx * fx * fx - 6.0 * fx * fx + 4.0) / 6.0
        wx2 = (-3.0 * fx * fx * fx + 3.0 * fx * fx + 3.0 * fx + 1.0) / 6.0
        wx3 = fx * fx * fx / 6.0
        wy0 = omy * omy * omy / 6.0
        wy1 = (3.0 * fy * fy * fy - 6.0 * fy * fy + 4.0) / 6.0
        wy2 = (-3.0 * fy * fy * fy + 3.0 * fy * fy + 3.0 * fy + 1.0) / 6.0
        wy3 = fy * fy * fy / 6.0
        for b in range(4):
            iy = by - 1 + b
            if iy < 0 or iy >= ncy:
                continue
            if b == 0:
                wyv = wy0
            elif b == 1:
                wyv = wy1
            elif b == 2:
                wyv = wy2
            else:
                wyv = wy3
            for a in range(4):
                ix = bx - 1 + a
                if ix < 0 or ix >= ncx:
                    continue
                if a == 0:
                    wv = wx0
                elif a == 1:
                    wv = wx1
                elif a == 2:
                    wv = wx2
                else:
                    wv = wx3
                wgt = wyv * wv
                gx[iy, ix] += wgt * beta_x[s]
                gy[iy, ix] += wgt * beta_y[s]
    return gx, gy


def _ffd_scatter_numpy(tx, ty, beta_x, beta_y, ncx, ncy):
    bx = np.floor(tx).astype(np.int64)
    by = np.floor(ty).astype(np.int64)
    wx = _bspline_w(tx - bx)
    wy = _bspline_w(ty - by)
    gx = np.zeros(ncy * ncx, dtype=np.float64)
    gy = np.zeros(ncy * ncx, dtype=np.float64)
    for b in range(4):
        iy = by - 1 + b
        oky = (iy >= 0) & (iy < ncy)
        for a in range(4):
            ix = bx - 1 + a
            ok = oky & (ix >= 0) & (ix < ncx)
            if not ok.any():
                continue
            flat = iy[ok] * ncx + ix[ok]
            wgt = (wy[b] * wx[a])[ok]
            np.add.at(gx, flat, wgt * beta_x[ok])
            np.add.at(gy, flat, wgt * beta_y[ok])
    return gx.reshape(ncy, ncx), gy.reshape(ncy, ncx)


# ---------------------------------------------------------------------------
# Path selection

if USE_NUMBA:
    _sig = dict(cache=True, fastmath=False)
    _bilinear_numba = njit(**_sig)(_bilinear_loops)
    _bilinear_grad_numba = njit(**_sig)(_bilinear_grad_loops)
    _nearest_numba = njit(**_sig)(_nearest_loops)
    _fill_volume_numba = njit(**_sig)(_fill_volume_loops)
    _sample_fan_numba = njit(**_sig)(_sample_fan_loops)
    _parzen_hist_numba = njit(**_sig)(_parzen_hist_loops)
    _parzen_terms_numba = njit(**_sig)(_parzen_terms_loops)
    _ffd_disp_numba = njit(**_sig)(_ffd_disp_loops)
    _ffd_scatter_numba = njit(**_sig)(_ffd_scatter_loops)

    bilinear = _bilinear_numba
    bilinear_grad = _bilinear_grad_numba
    nearest = _nearest_numba
    fill_volume = _fill_volume_numba
    sample_fan = _sample_fan_numba
    parzen_hist = _parzen_hist_numba
    parzen_terms = _parzen_terms_numba
    ffd_disp = _ffd_disp_numba
    ffd_scatter = _ffd_scatter_numba
else:
    bilinear = _bilinear_numpy
    bilinear_grad = _bilinear_grad_numpy
    nearest = _nearest_numpy
    fill_volume = _fill_volume_numpy
    sample_fan = _sample_fan_numpy
    parzen_hist = _parzen_hist_numpy
    parzen_terms = _parzen_terms_numpy
    ffd_disp = _ffd_disp_numpy
    ffd_scatter = _ffd_scatter_numpy
