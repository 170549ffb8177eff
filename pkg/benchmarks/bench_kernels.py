"""Compare the numba and numpy kernel backends on the hot paths.

The backend is chosen when vpbench._kernels is imported, so each
backend runs in its own subprocess with VPB_KERNEL_BACKEND set. The
image kernels (warp, resize) must agree bit for bit across backends:
both accumulate the four bilinear taps in the same fixed order. The
float distance kernel is allowed to differ in trailing ulps (different
summation order), so it is compared by max abs diff and per-row argmin.

Usage: python benchmarks/bench_kernels.py [reps]
"""

import hashlib
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np


def _inputs():
    rng = np.random.default_rng(20240817)
    img = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
    # mild perspective warp, inverse-mapping convention
    h_inv = np.array(
        [[0.95, 0.08, 4.0], [-0.06, 1.02, -3.0], [1.5e-4, -2.0e-4, 1.0]], dtype=np.float64
    )
    queries = rng.normal(size=(400, 256)).astype(np.float64)
    corpus = rng.normal(size=(2000, 256)).astype(np.float64)
    return img, h_inv, queries, corpus


def _time(fn, reps):
    fn()  # warmup; first numba call compiles
    t0 = time.perf_counter()
    for _ in range(reps):
        out = fn()
    return (time.perf_counter() - t0) / reps * 1e3, out


def worker(reps, sqdist_path):
    from vpbench._kernels import BACKEND, resize_bilinear, sqdist_matrix, warp_bilinear

    img, h_inv, queries, corpus = _inputs()
    results = {"backend": BACKEND}
    image_bytes = hashlib.sha256()
    ms, out = _time(lambda: warp_bilinear(img, h_inv), reps)
    results["warp_224_ms"] = round(ms, 3)
    image_bytes.update(np.ascontiguousarray(out).tobytes())
    ms, out = _time(lambda: resize_bilinear(img, 64, 64), reps)
    results["resize_224_to_64_ms"] = round(ms, 3)
    image_bytes.update(np.ascontiguousarray(out).tobytes())
    ms, out = _time(lambda: sqdist_matrix(queries, corpus), reps)
    results["sqdist_400x2000_ms"] = round(ms, 3)
    np.save(sqdist_path, out)
    results["image_checksum"] = image_bytes.hexdigest()
    print(json.dumps(results))


def main():
    reps = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    rows = []
    dists = {}
    with tempfile.TemporaryDirectory() as td:
        for backend in ("numpy", "numba"):
            sq_path = os.path.join(td, backend + ".npy")
            env = dict(os.environ, VPB_KERNEL_BACKEND=backend)
            proc = subprocess.run(
                [sys.executable, __file__, "--worker", str(reps), sq_path],
                env=env,
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                print(f"{backend}: FAILED\n{proc.stderr}", file=sys.stderr)
                continue
            rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))
            dists[backend] = np.load(sq_path)
    if not rows:
        return 1
    keys = [k for k in rows[0] if k.endswith("_ms")]
    print(f"{'kernel':<24}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speedup':>10}")
    for k in keys:
        line = f"{k:<24}" + "".join(f"{r[k]:>12.3f}" for r in rows)
        if len(rows) == 2 and rows[1][k] > 0:
            line += f"{rows[0][k] / rows[1][k]:>9.1f}x"
        print(line)
    ok = True
    if len(rows) == 2:
        images_equal = rows[0]["image_checksum"] == rows[1]["image_checksum"]
        print("image kernels bit-identical across backends:", images_equal)
        a, b = dists["numpy"], dists["numba"]
        max_diff = float(np.max(np.abs(a - b)))
        ranks_equal = bool(np.array_equal(np.argmin(a, axis=1), np.argmin(b, axis=1)))
        print(f"sqdist max |diff| across backends: {max_diff:.3e}; per-row argmin equal: {ranks_equal}")
        ok = images_equal and ranks_equal
    return 0 if ok else 1


if __name__ == "__main__":
    if len(sys.argv) > 1 and sys.argv[1] == "--worker":
        worker(int(sys.argv[2]), sys.argv[3])
    else:
        sys.exit(main())
