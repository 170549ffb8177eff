"""EMB1 writer: the binary container the evaluation harness reads.

Layout, all integers little-endian: magic b"EMB1", u32 version=1, u64
metadata length, canonical JSON metadata (sorted keys, no spaces), u32
CRC32 of the matrix bytes, float32 C-order matrix, u32 labels, then any
per-sample arrays in name order. Writing the same arrays twice yields
the same bytes, which is what lets two producers be compared file to
file.
"""

import json
import os
import struct
import tempfile
import zlib

import numpy as np

__all__ = ["write_emb1"]

_PER_SAMPLE_DTYPES = {"azimuth_deg": "<f4", "object_id": "<u4", "view_id": "<u4"}
_DTYPE_TAGS = {"azimuth_deg": "f32", "object_id": "u32", "view_id": "u32"}


def write_emb1(path, matrix, labels, *, dataset, model_name, model_type,
               num_classes, per_sample=None):
    """Serialize one embedding set, atomically.

    Bytes go to a temp file in the destination directory first and are
    moved into place with os.replace, so a crash mid-write never leaves
    a truncated .emb1 behind.

    Args:
        path: output file path; parent directories are created.
        matrix: (N, D) float array, finite.
        labels: (N,) integers in [0, num_classes).
        dataset / model_name / model_type / num_classes: metadata fields.
        per_sample: optional {name: (N,) array} with name one of
            azimuth_deg, object_id, view_id.

    Raises:
        ValueError: shape/label/finiteness violations.
        OSError: filesystem failures.
    """
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ValueError(f"matrix must be (N>=1, D>=1), got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix has NaN/Inf entries")
    n = matrix.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match N={n}")
    if num_classes < 1 or np.any(labels >= num_classes):
        raise ValueError(f"labels exceed num_classes={num_classes}")
    per = {}
    for name in sorted(per_sample or {}):
        if name not in _PER_SAMPLE_DTYPES:
            raise ValueError(f"unknown per-sample field {name!r}")
        arr = np.ascontiguousarray(per_sample[name], dtype=_PER_SAMPLE_DTYPES[name])
        if arr.shape != (n,):
            raise ValueError(f"per-sample {name} length {arr.shape[0]} does not match N={n}")
        per[name] = arr

    meta = {
        "count": int(n),
        "dim": int(matrix.shape[1]),
        "dataset": dataset,
        "model_name": model_name,
        "model_type": model_type,
        "num_classes": int(num_classes),
        "per_sample": [{"dtype": _DTYPE_TAGS[k], "name": k} for k in sorted(per)],
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = matrix.tobytes(order="C")
    parts = [
        b"EMB1",
        struct.pack("<I", 1),
        struct.pack("<Q", len(blob)),
        blob,
        struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF),
        body,
        labels.tobytes(order="C"),
    ]
    parts.extend(per[k].tobytes(order="C") for k in sorted(per))
    data = b"".join(parts)

    out_dir = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(out_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".emb1.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
