"""Numba kernel implementations.

Scalar loops that evaluate the same float64 expressions as ``_numpy``,
term for term, so warp and resize agree with the fallback bit-for-bit.
Compiled without fastmath: reassociation or FMA contraction would break
that equivalence.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def warp_bilinear(src, hinv):
    h, w, c = src.shape
    out = np.empty((h, w, c), dtype=np.float64)
    for y in range(h):
        cy = y + 0.5
        for x in range(w):
            cx = x + 0.5
            den = hinv[2, 0] * cx + hinv[2, 1] * cy + hinv[2, 2]
            safe = abs(den) > 1e-12
            if not safe:
                den = 1.0
            sx = (hinv[0, 0] * cx + hinv[0, 1] * cy + hinv[0, 2]) / den
            sy = (hinv[1, 0] * cx + hinv[1, 1] * cy + hinv[1, 2]) / den

            px = sx - 0.5
            py = sy - 0.5
            x0f = np.floor(px)
            y0f = np.floor(py)
            fx = px - x0f
            fy = py - y0f
            x0 = int(x0f)
            y0 = int(y0f)
            x1 = x0 + 1
            y1 = y0 + 1

            v00 = 1.0 if (y0 >= 0 and y0 < h and x0 >= 0 and x0 < w and safe) else 0.0
            v01 = 1.0 if (y0 >= 0 and y0 < h and x1 >= 0 and x1 < w and safe) else 0.0
            v10 = 1.0 if (y1 >= 0 and y1 < h and x0 >= 0 and x0 < w and safe) else 0.0
            v11 = 1.0 if (y1 >= 0 and y1 < h and x1 >= 0 and x1 < w and safe) else 0.0

            y0c = min(max(y0, 0), h - 1)
            x0c = min(max(x0, 0), w - 1)
            y1c = min(max(y1, 0), h - 1)
            x1c = min(max(x1, 0), w - 1)

            w00 = (1.0 - fy) * (1.0 - fx) * v00
            w01 = (1.0 - fy) * fx * v01
            w10 = fy * (1.0 - fx) * v10
            w11 = fy * fx * v11

            for ch in range(c):
                out[y, x, ch] = (
                    w00 * src[y0c, x0c, ch]
                    + w01 * src[y0c, x1c, ch]
                    + w10 * src[y1c, x0c, ch]
                    + w11 * src[y1c, x1c, ch]
                )
    return out


@njit(cache=True)
def resize_bilinear(src, out_h, out_w):
    h, w, c = src.shape
    scale_x = w / out_w
    scale_y = h / out_h
    out = np.empty((out_h, out_w, c), dtype=np.float64)
    for y in range(out_h):
        py = (y + 0.5) * scale_y - 0.5
        y0f = np.floor(py)
        fy = py - y0f
        y0i = int(y0f)
        y0 = min(max(y0i, 0), h - 1)
        y1 = min(max(y0i + 1, 0), h - 1)
        for x in range(out_w):
            px = (x + 0.5) * scale_x - 0.5
            x0f = np.floor(px)
            fx = px - x0f
            x0i = int(x0f)
            x0 = min(max(x0i, 0), w - 1)
            x1 = min(max(x0i + 1, 0), w - 1)

            w00 = (1.0 - fy) * (1.0 - fx)
            w01 = (1.0 - fy) * fx
            w10 = fy * (1.0 - fx)
            w11 = fy * fx

            for ch in range(c):
                out[y, x, ch] = (
                    w00 * src[y0, x0, ch]
                    + w01 * src[y0, x1, ch]
                    + w10 * src[y1, x0, ch]
                    + w11 * src[y1, x1, ch]
                )
    return out


@njit(cache=True)
def sqdist_matrix(q, t):
    m = q.shape[0]
    n = t.shape[0]
    d = q.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = q[i, k] - t[j, k]
                acc += diff * diff
            out[i, j] = acc
    return out


@njit(cache=True)
def dot_matrix(q, t):
    m = q.shape[0]
    n = t.shape[0]
    d = q.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                acc += q[i, k] * t[j, k]
            out[i, j] = acc
    return out
