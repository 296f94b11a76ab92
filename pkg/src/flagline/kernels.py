"""Hot numeric kernels, each in a numba and a pure-numpy flavor.

Per-pixel resampling, luma statistics, region blur/mosaic and the IIR
filter cascade dominate pipeline runtime, so they are compiled with
``@njit`` when available. The numpy fallbacks mirror the same arithmetic
in the same order (prefix sums instead of running windows, identical
blend expressions) so both paths produce bit-identical output; tests
assert that and ``benchmarks/bench_kernels.py`` measures the gap.

Conventions: frames are uint8 ``(H, W, 3)`` rasters, sampling works on
float64 images, ``xs``/``ys`` are flat continuous pixel coordinates
(integer coordinates address pixel centers).
"""

from __future__ import annotations

import numpy as np

from .accel import NUMBA_ENABLED, njit

LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114


# ---------------------------------------------------------------------------
# bilinear sampling
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bilinear_njit(img, xs, ys, wrap_x):
    h, w, c = img.shape
    n = xs.shape[0]
    out = np.empty((n, c), dtype=np.float64)
    for i in range(n):
        x = xs[i]
        y = ys[i]
        x0 = np.floor(x)
        y0 = np.floor(y)
        fx = x - x0
        fy = y - y0
        ix0 = int(x0)
        iy0 = int(y0)
        if wrap_x:
            ix0 = ix0 % w
            ix1 = (ix0 + 1) % w
        else:
            if ix0 < 0:
                ix0 = 0
            elif ix0 > w - 1:
                ix0 = w - 1
            ix1 = ix0 + 1
            if ix1 > w - 1:
                ix1 = w - 1
        if iy0 < 0:
            iy0 = 0
        elif iy0 > h - 1:
            iy0 = h - 1
        iy1 = iy0 + 1
        if iy1 > h - 1:
            iy1 = h - 1
        for k in range(c):
            top = img[iy0, ix0, k] * (1.0 - fx) + img[iy0, ix1, k] * fx
            bot = img[iy1, ix0, k] * (1.0 - fx) + img[iy1, ix1, k] * fx
            out[i, k] = top * (1.0 - fy) + bot * fy
    return out


def _bilinear_numpy(img, xs, ys, wrap_x):
    h, w, _ = img.shape
    x0f = np.floor(xs)
    y0f = np.floor(ys)
    fx = (xs - x0f)[:, None]
    fy = (ys - y0f)[:, None]
    ix0 = x0f.astype(np.int64)
    iy0 = y0f.astype(np.int64)
    if wrap_x:
        ix0 = ix0 % w
        ix1 = (ix0 + 1) % w
    else:
        ix0 = np.clip(ix0, 0, w - 1)
        ix1 = np.clip(ix0 + 1, 0, w - 1)
    iy0 = np.clip(iy0, 0, h - 1)
    iy1 = np.clip(iy0 + 1, 0, h - 1)
    top = img[iy0, ix0] * (1.0 - fx) + img[iy0, ix1] * fx
    bot = img[iy1, ix0] * (1.0 - fx) + img[iy1, ix1] * fx
    return top * (1.0 - fy) + bot * fy


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, wrap_x: bool) -> np.ndarray:
    """Sample ``img`` at continuous pixel coords; x wraps or clamps, y clamps."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    if NUMBA_ENABLED:
        return _bilinear_njit(img, xs, ys, wrap_x)
    return _bilinear_numpy(img, xs, ys, wrap_x)


# ---------------------------------------------------------------------------
# luma statistics (clip descriptors)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _dark_fraction_njit(frame, threshold):
    h, w, _ = frame.shape
    dark = 0
    for y in range(h):
        for x in range(w):
            lum = np.rint(
                LUMA_R * frame[y, x, 0] + LUMA_G * frame[y, x, 1] + LUMA_B * frame[y, x, 2]
            )
            if lum < threshold:
                dark += 1
    return dark / (h * w)


def _dark_fraction_numpy(frame, threshold):
    f = frame.astype(np.float64)
    lum = np.rint(LUMA_R * f[:, :, 0] + LUMA_G * f[:, :, 1] + LUMA_B * f[:, :, 2])
    return int(np.count_nonzero(lum < threshold)) / lum.size


def dark_fraction(frame: np.ndarray, threshold: float) -> float:
    """Fraction of pixels whose rounded Rec.601 luma is below ``threshold``."""
    if NUMBA_ENABLED:
        return _dark_fraction_njit(frame.astype(np.float64), float(threshold))
    return _dark_fraction_numpy(frame, float(threshold))


@njit(cache=True)
def _mean_abs_luma_diff_njit(a, b):
    h, w, _ = a.shape
    acc = 0.0
    for y in range(h):
        for x in range(w):
            la = np.rint(LUMA_R * a[y, x, 0] + LUMA_G * a[y, x, 1] + LUMA_B * a[y, x, 2])
            lb = np.rint(LUMA_R * b[y, x, 0] + LUMA_G * b[y, x, 1] + LUMA_B * b[y, x, 2])
            acc += abs(la - lb)
    return acc / (h * w)


def _mean_abs_luma_diff_numpy(a, b):
    af = a.astype(np.float64)
    bf = b.astype(np.float64)
    la = np.rint(LUMA_R * af[:, :, 0] + LUMA_G * af[:, :, 1] + LUMA_B * af[:, :, 2])
    lb = np.rint(LUMA_R * bf[:, :, 0] + LUMA_G * bf[:, :, 1] + LUMA_B * bf[:, :, 2])
    # rounded lumas are integers, so the float64 sum is exact in any order
    return float(np.sum(np.abs(la - lb))) / la.size


def mean_abs_luma_diff(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute rounded-luma difference between two equal-size frames."""
    if NUMBA_ENABLED:
        return _mean_abs_luma_diff_njit(a.astype(np.float64), b.astype(np.float64))
    return _mean_abs_luma_diff_numpy(a, b)


# ---------------------------------------------------------------------------
# box blur (separable, clamped edges, prefix-sum windows)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _blur_axis0_njit(img, radius):
    n, m, c = img.shape
    out = np.empty_like(img)
    win = 2 * radius + 1
    pref = np.empty(n + 1, dtype=np.float64)
    for j in range(m):
        for k in range(c):
            pref[0] = 0.0
            for i in range(n):
                pref[i + 1] = pref[i] + img[i, j, k]
            for i in range(n):
                lo = i - radius
                hi = i + radius + 1
                lo_c = lo if lo > 0 else 0
                hi_c = hi if hi < n else n
                total = pref[hi_c] - pref[lo_c]
                if lo < 0:
                    total = total + (-lo) * img[0, j, k]
                if hi > n:
                    total = total + (hi - n) * img[n - 1, j, k]
                out[i, j, k] = total / win
    return out


def _blur_axis0_numpy(img, radius):
    n = img.shape[0]
    win = 2 * radius + 1
    pref = np.concatenate([np.zeros((1,) + img.shape[1:]), np.cumsum(img, axis=0)], axis=0)
    idx = np.arange(n)
    lo = idx - radius
    hi = idx + radius + 1
    total = pref[np.clip(hi, 0, n)] - pref[np.clip(lo, 0, n)]
    left = np.maximum(0, -lo).astype(np.float64)
    right = np.maximum(0, hi - n).astype(np.float64)
    total = total + left[:, None, None] * img[0]
    total = total + right[:, None, None] * img[n - 1]
    return total / win


def box_blur(img: np.ndarray, radius: int, passes: int = 3) -> np.ndarray:
    """Iterated separable box blur with edge clamping, float64 in/out."""
    buf = np.ascontiguousarray(img, dtype=np.float64)
    for _ in range(passes):
        if NUMBA_ENABLED:
            buf = _blur_axis0_njit(buf, radius)
            buf = np.ascontiguousarray(buf.swapaxes(0, 1))
            buf = _blur_axis0_njit(buf, radius)
            buf = np.ascontiguousarray(buf.swapaxes(0, 1))
        else:
            buf = _blur_axis0_numpy(buf, radius)
            buf = _blur_axis0_numpy(buf.swapaxes(0, 1), radius).swapaxes(0, 1)
    return buf


# ---------------------------------------------------------------------------
# mosaic (per-cell mean fill)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _mosaic_njit(region, cell):
    h, w, c = region.shape
    out = np.empty_like(region)
    for cy in range(0, h, cell):
        y1 = cy + cell
        if y1 > h:
            y1 = h
        for cx in range(0, w, cell):
            x1 = cx + cell
            if x1 > w:
                x1 = w
            count = (y1 - cy) * (x1 - cx)
            for k in range(c):
                acc = 0.0
                for y in range(cy, y1):
                    for x in range(cx, x1):
                        acc += region[y, x, k]
                val = np.rint(acc / count)
                for y in range(cy, y1):
                    for x in range(cx, x1):
                        out[y, x, k] = val
    return out


def _mosaic_numpy(region, cell):
    h, w, _ = region.shape
    out = np.empty_like(region)
    for cy in range(0, h, cell):
        y1 = min(cy + cell, h)
        for cx in range(0, w, cell):
            x1 = min(cx + cell, w)
            block = region[cy:y1, cx:x1]
            # uint8 sums are exact integers in float64, order-independent
            mean = np.rint(block.reshape(-1, block.shape[2]).sum(axis=0) / ((y1 - cy) * (x1 - cx)))
            out[cy:y1, cx:x1] = mean
    return out


def mosaic_region(region: np.ndarray, cell: int) -> np.ndarray:
    """Replace each ``cell``-sized block with its rounded mean color."""
    reg = np.ascontiguousarray(region, dtype=np.float64)
    if NUMBA_ENABLED:
        filled = _mosaic_njit(reg, cell)
    else:
        filled = _mosaic_numpy(reg, cell)
    return np.clip(filled, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# biquad cascade (direct form II transposed)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sosfilt_njit(sos, x):
    y = x.copy()
    n = y.shape[0]
    for s in range(sos.shape[0]):
        b0 = sos[s, 0]
        b1 = sos[s, 1]
        b2 = sos[s, 2]
        a1 = sos[s, 4]
        a2 = sos[s, 5]
        z1 = 0.0
        z2 = 0.0
        for i in range(n):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
    return y


def _sosfilt_python(sos, x):
    y = x.copy()
    for s in range(sos.shape[0]):
        b0, b1, b2, _, a1, a2 = (float(v) for v in sos[s])
        z1 = 0.0
        z2 = 0.0
        for i in range(y.shape[0]):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
    return y


def sosfilt(sos: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a cascade of second-order sections (a0 normalized to 1)."""
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if NUMBA_ENABLED:
        return _sosfilt_njit(sos, x)
    return _sosfilt_python(sos, x)
