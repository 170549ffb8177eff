"""Embedding-set container format, dataset manifests, pixel embedder.

The EMB1 binary layout (integers little-endian):

    magic "EMB1" | version u32 = 1 | meta_len u64 | canonical JSON metadata
    | matrix CRC32 u32 | float32 matrix (count*dim row-major)
    | u32 labels (count) | per-sample blocks in descriptor order

Metadata JSON is dumped with sorted keys and compact separators, so
identical inputs produce byte-identical files on every platform. The
per-sample descriptors are {"name", "dtype"} pairs sorted by name;
allowed fields are azimuth_deg (f32), object_id (u32), view_id (u32).
"""

import dataclasses
import enum
import json
import math
import os
import struct
import zlib

import numpy as np

from . import _kernels
from .errors import FormatError, InvalidManifest, IoError, UnsupportedPngVariant
from .errors import IoError as _IoError
from .imageops import _check_image, load_png

__all__ = [
    "ModelType",
    "ModelMeta",
    "EmbeddingSet",
    "ImageRecord",
    "DatasetManifest",
    "Violation",
    "write_embedding_set",
    "read_embedding_set",
    "pixel_embedder",
    "load_manifest",
    "save_manifest",
    "validate_manifest",
]

_PER_SAMPLE_DTYPES = {"azimuth_deg": "f32", "object_id": "u32", "view_id": "u32"}
_NP_DTYPES = {"f32": np.dtype("<f4"), "u32": np.dtype("<u4")}


class ModelType(enum.Enum):
    """Model grouping used by the aggregation tables."""

    SSL_ID = "SSL (ID)"
    SSL_PT = "SSL (PT)"
    SUPERVISED = "Supervised"


@dataclasses.dataclass(frozen=True)
class ModelMeta:
    """Identity of the embedding producer."""

    model_name: str
    model_type: ModelType
    dataset: str
    num_classes: int
    dim: int

    def __post_init__(self):
        if not isinstance(self.model_type, ModelType):
            raise TypeError(f"model_type must be ModelType, got {type(self.model_type).__name__}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


class EmbeddingSet:
    """N x D float32 embeddings with labels and optional view metadata.

    Immutable after construction; arrays are stored read-only.

    Attributes:
        matrix: (N, D) float32, finite.
        labels: (N,) uint32, each below meta.num_classes.
        meta: ModelMeta with meta.dim == D.
        per_sample: dict of optional per-row arrays (azimuth_deg float32
            in [0, 360), object_id uint32, view_id uint32).
    """

    __slots__ = ("matrix", "labels", "meta", "per_sample")

    def __init__(self, matrix, labels, meta, per_sample=None):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        labels = np.ascontiguousarray(labels, dtype=np.uint32)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise ValueError(f"matrix must be (N>=1, D>=1), got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("matrix has NaN/Inf entries")
        n, d = matrix.shape
        if labels.shape != (n,):
            raise ValueError(f"labels shape {labels.shape} does not match N={n}")
        if meta.dim != d:
            raise ValueError(f"meta.dim={meta.dim} does not match matrix D={d}")
        if np.any(labels >= meta.num_classes):
            bad = int(labels.max())
            raise ValueError(f"label {bad} >= num_classes {meta.num_classes}")
        clean = {}
        for name, values in sorted((per_sample or {}).items()):
            if name not in _PER_SAMPLE_DTYPES:
                raise ValueError(f"unknown per-sample field {name!r}")
            arr = np.ascontiguousarray(values, dtype=_NP_DTYPES[_PER_SAMPLE_DTYPES[name]])
            if arr.shape != (n,):
                raise ValueError(f"per-sample field {name!r} shape {arr.shape} != ({n},)")
            if name == "azimuth_deg":
                if not np.all(np.isfinite(arr)):
                    raise ValueError("azimuth_deg has NaN/Inf entries")
                if np.any(arr < 0.0) or np.any(arr >= 360.0):
                    raise ValueError("azimuth_deg outside [0, 360)")
            arr.setflags(write=False)
            clean[name] = arr
        matrix.setflags(write=False)
        labels.setflags(write=False)
        self.matrix = matrix
        self.labels = labels
        self.meta = meta
        self.per_sample = clean

    @property
    def count(self):
        return self.matrix.shape[0]

    @property
    def dim(self):
        return self.matrix.shape[1]

    def take(self, indices):
        """New EmbeddingSet with the given rows, same metadata."""
        idx = np.asarray(indices, dtype=np.int64)
        return EmbeddingSet(
            self.matrix[idx],
            self.labels[idx],
            self.meta,
            {name: arr[idx] for name, arr in self.per_sample.items()},
        )


def write_embedding_set(es, path):
    """Serialize an EmbeddingSet to an EMB1 file.

    Raises:
        IoError: on any OS-level write failure.
    """
    meta = {
        "count": es.count,
        "dim": es.dim,
        "dataset": es.meta.dataset,
        "model_name": es.meta.model_name,
        "model_type": es.meta.model_type.value,
        "num_classes": es.meta.num_classes,
        "per_sample": [
            {"dtype": _PER_SAMPLE_DTYPES[name], "name": name} for name in sorted(es.per_sample)
        ],
    }
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    matrix_bytes = es.matrix.astype("<f4", copy=False).tobytes(order="C")
    parts = [
        b"EMB1",
        struct.pack("<I", 1),
        struct.pack("<Q", len(meta_blob)),
        meta_blob,
        struct.pack("<I", zlib.crc32(matrix_bytes) & 0xFFFFFFFF),
        matrix_bytes,
        es.labels.astype("<u4", copy=False).tobytes(order="C"),
    ]
    for name in sorted(es.per_sample):
        parts.append(es.per_sample[name].tobytes(order="C"))
    try:
        with open(path, "wb") as f:
            f.write(b"".join(parts))
    except OSError as e:
        raise IoError(f"{path}: {e}") from e


class _Cursor:
    """Sequential reader that reports the offset where data ran out."""

    def __init__(self, data):
        self.data = data
        self.pos = 0

    def need(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated reading {what}: need {n} bytes, have {len(self.data) - self.pos}",
                offset=self.pos,
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def read_embedding_set(path):
    """Parse an EMB1 file back into an EmbeddingSet.

    Raises:
        IoError: unreadable file.
        FormatError: bad magic/version, truncation (with the byte offset),
            checksum mismatch, or an invariant violation in the payload.
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
    cur = _Cursor(data)
    magic = cur.need(4, "magic")
    if magic != b"EMB1":
        raise FormatError(f"bad magic {magic!r}, expected b'EMB1'", offset=0)
    (version,) = struct.unpack("<I", cur.need(4, "version"))
    if version != 1:
        raise FormatError(f"unsupported format version {version}", offset=4)
    (meta_len,) = struct.unpack("<Q", cur.need(8, "meta length"))
    meta_blob = cur.need(meta_len, "metadata JSON")
    try:
        meta = json.loads(meta_blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"metadata is not valid JSON: {e}", offset=16) from e
    for key in ("count", "dim", "dataset", "model_name", "model_type", "num_classes", "per_sample"):
        if key not in meta:
            raise FormatError(f"metadata missing key {key!r}", offset=16)
    count = meta["count"]
    dim = meta["dim"]
    if not (isinstance(count, int) and count >= 1 and isinstance(dim, int) and dim >= 1):
        raise FormatError(f"bad count/dim ({count!r}, {dim!r})", offset=16)
    try:
        model_type = ModelType(meta["model_type"])
    except ValueError:
        raise FormatError(f"unknown model_type {meta['model_type']!r}", offset=16) from None
    descriptors = meta["per_sample"]
    if not isinstance(descriptors, list):
        raise FormatError("per_sample must be a list of descriptors", offset=16)
    names = []
    for desc in descriptors:
        if not (isinstance(desc, dict) and set(desc) == {"name", "dtype"}):
            raise FormatError(f"bad per-sample descriptor {desc!r}", offset=16)
        name, dtype = desc["name"], desc["dtype"]
        if _PER_SAMPLE_DTYPES.get(name) != dtype:
            raise FormatError(f"unsupported per-sample field {name!r}/{dtype!r}", offset=16)
        if name in names:
            raise FormatError(f"duplicate per-sample field {name!r}", offset=16)
        names.append(name)

    (crc_stored,) = struct.unpack("<I", cur.need(4, "matrix checksum"))
    matrix_off = cur.pos
    matrix_bytes = cur.need(count * dim * 4, "float32 matrix")
    if zlib.crc32(matrix_bytes) & 0xFFFFFFFF != crc_stored:
        raise FormatError("matrix checksum mismatch", offset=matrix_off)
    matrix = np.frombuffer(matrix_bytes, dtype="<f4").reshape(count, dim)
    labels = np.frombuffer(cur.need(count * 4, "labels"), dtype="<u4")
    per_sample = {}
    for name in names:
        blob = cur.need(count * 4, f"per-sample block {name!r}")
        per_sample[name] = np.frombuffer(blob, dtype=_NP_DTYPES[_PER_SAMPLE_DTYPES[name]])
    if cur.pos != len(data):
        raise FormatError(f"{len(data) - cur.pos} trailing bytes", offset=cur.pos)

    mm = ModelMeta(
        model_name=meta["model_name"],
        model_type=model_type,
        dataset=meta["dataset"],
        num_classes=meta["num_classes"],
        dim=dim,
    )
    try:
        return EmbeddingSet(matrix, labels, mm, per_sample)
    except (ValueError, TypeError) as e:
        raise FormatError(f"payload violates set invariants: {e}") from e


def pixel_embedder(img):
    """Deterministic 256-dim embedding of an image from raw pixels.

    Grayscale (0.299R + 0.587G + 0.114B), bilinear resize to 16x16,
    row-major flatten, scale to [0, 1], subtract the mean.

    Returns:
        (256,) float32 vector summing to ~0.
    """
    _check_image(img)
    f = img.astype(np.float64)
    if img.shape[2] == 3:
        gray = 0.299 * f[:, :, 0] + 0.587 * f[:, :, 1] + 0.114 * f[:, :, 2]
    else:
        gray = f[:, :, 0]
    small = _kernels.resize_bilinear(np.ascontiguousarray(gray[:, :, None]), 16, 16)
    v = small.reshape(-1) / 255.0
    v = v - v.mean()
    return v.astype(np.float32)


@dataclasses.dataclass(frozen=True)
class ImageRecord:
    """One manifest entry; path is relative to the manifest's root."""

    id: str
    path: str
    label: int
    object_id: int = None
    azimuth_deg: float = None
    view_id: int = None


@dataclasses.dataclass(frozen=True)
class DatasetManifest:
    """Dataset description: classes, image records, declared splits."""

    dataset: str
    class_names: tuple
    images: tuple
    splits: dict

    def records_for_split(self, split):
        if split not in self.splits:
            raise InvalidManifest(f"manifest has no split {split!r}")
        by_id = {rec.id: rec for rec in self.images}
        return [by_id[i] for i in self.splits[split]]


@dataclasses.dataclass(frozen=True)
class Violation:
    """One manifest check failure; validate_manifest returns these as data."""

    kind: str
    subject: str
    detail: str

    def __str__(self):
        return f"{self.kind}({self.subject}): {self.detail}"


def load_manifest(path):
    """Load a manifest JSON document.

    Structural problems (bad JSON, missing keys, wrong types) raise
    InvalidManifest; content problems (duplicate ids, missing files) are
    left to validate_manifest.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise IoError(f"{path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidManifest(f"{path}: not valid JSON: {e}") from e
    return manifest_from_dict(doc, origin=str(path))


def manifest_from_dict(doc, origin="<dict>"):
    if not isinstance(doc, dict):
        raise InvalidManifest(f"{origin}: manifest must be a JSON object")
    for key in ("dataset", "class_names", "images", "splits"):
        if key not in doc:
            raise InvalidManifest(f"{origin}: missing key {key!r}")
    if not isinstance(doc["class_names"], list) or not all(
        isinstance(c, str) for c in doc["class_names"]
    ):
        raise InvalidManifest(f"{origin}: class_names must be a list of strings")
    records = []
    if not isinstance(doc["images"], list):
        raise InvalidManifest(f"{origin}: images must be a list")
    for i, rec in enumerate(doc["images"]):
        if not isinstance(rec, dict):
            raise InvalidManifest(f"{origin}: images[{i}] is not an object")
        for key, typ in (("id", str), ("path", str), ("label", int)):
            if not isinstance(rec.get(key), typ):
                raise InvalidManifest(f"{origin}: images[{i}].{key} missing or wrong type")
        extra = set(rec) - {"id", "path", "label", "object_id", "azimuth_deg", "view_id"}
        if extra:
            raise InvalidManifest(f"{origin}: images[{i}] has unknown keys {sorted(extra)}")
        records.append(
            ImageRecord(
                id=rec["id"],
                path=rec["path"],
                label=rec["label"],
                object_id=rec.get("object_id"),
                azimuth_deg=rec.get("azimuth_deg"),
                view_id=rec.get("view_id"),
            )
        )
    splits = doc["splits"]
    if not isinstance(splits, dict) or not all(
        isinstance(k, str) and isinstance(v, list) for k, v in splits.items()
    ):
        raise InvalidManifest(f"{origin}: splits must map names to id lists")
    return DatasetManifest(
        dataset=doc["dataset"],
        class_names=tuple(doc["class_names"]),
        images=tuple(records),
        splits={k: list(v) for k, v in splits.items()},
    )


def manifest_to_dict(manifest):
    images = []
    for rec in manifest.images:
        d = {"id": rec.id, "path": rec.path, "label": rec.label}
        if rec.object_id is not None:
            d["object_id"] = rec.object_id
        if rec.azimuth_deg is not None:
            d["azimuth_deg"] = rec.azimuth_deg
        if rec.view_id is not None:
            d["view_id"] = rec.view_id
        images.append(d)
    return {
        "dataset": manifest.dataset,
        "class_names": list(manifest.class_names),
        "images": images,
        "splits": {k: list(v) for k, v in manifest.splits.items()},
    }


def save_manifest(manifest, path):
    blob = json.dumps(manifest_to_dict(manifest), sort_keys=True, indent=2) + "\n"
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(blob)
    except OSError as e:
        raise IoError(f"{path}: {e}") from e


def validate_manifest(manifest, root_dir):
    """Check a manifest against its image tree.

    Returns:
        List of Violation records; empty means valid. Checks: id
        uniqueness, label range, referenced files exist and decode,
        azimuths in [0, 360), split ids known, and view metadata either
        absent or present on every record.
    """
    violations = []
    seen = set()
    for rec in manifest.images:
        if rec.id in seen:
            violations.append(Violation("DuplicateId", rec.id, "id appears more than once"))
        seen.add(rec.id)
        if not 0 <= rec.label < len(manifest.class_names):
            violations.append(
                Violation(
                    "LabelOutOfRange",
                    rec.id,
                    f"label {rec.label} outside [0, {len(manifest.class_names)})",
                )
            )
        if rec.azimuth_deg is not None:
            a = float(rec.azimuth_deg)
            if not (math.isfinite(a) and 0.0 <= a < 360.0):
                violations.append(
                    Violation("RangeViolation", rec.id, f"azimuth_deg {rec.azimuth_deg} outside [0, 360)")
                )
        full = os.path.join(root_dir, rec.path)
        if not os.path.isfile(full):
            violations.append(Violation("MissingFile", rec.id, f"no such file: {rec.path}"))
        else:
            try:
                load_png(full)
            except (_IoError, UnsupportedPngVariant) as e:
                violations.append(Violation("DecodeError", rec.id, str(e)))
    with_azimuth = sum(1 for rec in manifest.images if rec.azimuth_deg is not None)
    if 0 < with_azimuth < len(manifest.images):
        violations.append(
            Violation(
                "MixedViewMetadata",
                manifest.dataset,
                f"azimuth_deg on {with_azimuth} of {len(manifest.images)} records",
            )
        )
    for split, ids in manifest.splits.items():
        for i in ids:
            if i not in seen:
                violations.append(Violation("UnknownSplitId", split, f"unknown image id {i!r}"))
    return violations
