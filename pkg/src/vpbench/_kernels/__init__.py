"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

Backend selection is controlled by the ``VPB_KERNEL_BACKEND`` environment
variable: ``numba`` forces the jitted kernels (import error if numba is
unavailable), ``numpy`` forces the fallback, unset prefers numba when it
imports. The two backends evaluate the warp/resize arithmetic in the same
operation order without fastmath, so their outputs are bit-identical;
distance kernels may differ in the last bit of the accumulated sums
(summation order), which never changes a ranking except on exact ties,
and exact ties are broken by index identically in both.

Exposed kernels (all take/return float64 ndarrays):
  warp_bilinear(src (H,W,C), hinv (3,3)) -> (H,W,C)   black fill outside
  resize_bilinear(src (H,W,C), out_h, out_w)          edge clamp
  sqdist_matrix(q (M,D), t (N,D)) -> (M,N)
  dot_matrix(q (M,D), t (N,D)) -> (M,N)
"""

import os

_requested = os.environ.get("VPB_KERNEL_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"VPB_KERNEL_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    from . import _numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _numpy as _impl

        BACKEND = "numpy"

warp_bilinear = _impl.warp_bilinear
resize_bilinear = _impl.resize_bilinear
sqdist_matrix = _impl.sqdist_matrix
dot_matrix = _impl.dot_matrix
