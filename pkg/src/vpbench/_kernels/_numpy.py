"""Pure-numpy kernel implementations.

Arithmetic mirrors ``_numba`` expression-for-expression: the bilinear
blend is accumulated as (((w00*p00 + w01*p01) + w10*p10) + w11*p11) in
float64 in both backends, so results agree bit-for-bit.
"""

import numpy as np


def warp_bilinear(src, hinv):
    """Inverse-map warp with bilinear sampling and black fill.

    Output pixel centres (x+0.5, y+0.5) are pulled back through hinv;
    taps outside the source contribute zero.
    """
    h, w, c = src.shape
    xs = np.arange(w, dtype=np.float64) + 0.5
    ys = np.arange(h, dtype=np.float64) + 0.5
    cx, cy = np.meshgrid(xs, ys)

    den = hinv[2, 0] * cx + hinv[2, 1] * cy + hinv[2, 2]
    safe = np.abs(den) > 1e-12
    den = np.where(safe, den, 1.0)
    sx = (hinv[0, 0] * cx + hinv[0, 1] * cy + hinv[0, 2]) / den
    sy = (hinv[1, 0] * cx + hinv[1, 1] * cy + hinv[1, 2]) / den

    px = sx - 0.5
    py = sy - 0.5
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    def tap(yi, xi):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w) & safe
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        return valid.astype(np.float64), yc, xc

    v00, y00, x00 = tap(y0, x0)
    v01, y01, x01 = tap(y0, x1)
    v10, y10, x10 = tap(y1, x0)
    v11, y11, x11 = tap(y1, x1)

    w00 = (1.0 - fy) * (1.0 - fx) * v00
    w01 = (1.0 - fy) * fx * v01
    w10 = fy * (1.0 - fx) * v10
    w11 = fy * fx * v11

    out = np.empty((h, w, c), dtype=np.float64)
    for ch in range(c):
        plane = src[:, :, ch]
        out[:, :, ch] = (
            w00 * plane[y00, x00]
            + w01 * plane[y01, x01]
            + w10 * plane[y10, x10]
            + w11 * plane[y11, x11]
        )
    return out


def resize_bilinear(src, out_h, out_w):
    """Bilinear resize with half-pixel centres and edge clamping."""
    h, w, c = src.shape
    scale_x = w / out_w
    scale_y = h / out_h
    px = (np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5
    py = (np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5
    px, py = np.meshgrid(px, py)

    x0f = np.floor(px)
    y0f = np.floor(py)
    fx = px - x0f
    fy = py - y0f
    x0f = x0f.astype(np.int64)
    y0f = y0f.astype(np.int64)
    x0 = np.clip(x0f, 0, w - 1)
    y0 = np.clip(y0f, 0, h - 1)
    x1 = np.clip(x0f + 1, 0, w - 1)
    y1 = np.clip(y0f + 1, 0, h - 1)

    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx

    out = np.empty((out_h, out_w, c), dtype=np.float64)
    for ch in range(c):
        plane = src[:, :, ch]
        out[:, :, ch] = (
            w00 * plane[y0, x0]
            + w01 * plane[y0, x1]
            + w10 * plane[y1, x0]
            + w11 * plane[y1, x1]
        )
    return out


def sqdist_matrix(q, t):
    """Squared Euclidean distances, one query row at a time."""
    m = q.shape[0]
    n = t.shape[0]
    out = np.empty((m, n), dtype=np.float64)
    for i in range(m):
        d = t - q[i]
        out[i] = np.sum(d * d, axis=1)
    return out


def dot_matrix(q, t):
    """Inner products q @ t.T without BLAS threading."""
    return np.einsum("md,nd->mn", q, t)
