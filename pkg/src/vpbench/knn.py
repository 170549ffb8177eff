"""Exact brute-force k-nearest-neighbor search over embeddings.

Distances are computed in float64. Cosine distance is 1 - cosine
similarity, with zero vectors treated as similarity 0 to everything.
Ties are broken toward the smaller train index, which makes rankings
fully deterministic.
"""

import enum

import numpy as np

from . import _kernels
from .errors import KTooLarge, ShapeMismatch

__all__ = ["Metric", "nearest", "nn_accuracy", "l2_normalize"]


class Metric(enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


def l2_normalize(mat):
    """Row-wise L2 normalization; all-zero rows are left as zeros."""
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.sqrt(np.sum(mat * mat, axis=1, keepdims=True))
    return mat / np.where(norms > 0.0, norms, 1.0)


def nearest(query, train, k, metric=Metric.COSINE):
    """Indices of the k nearest train rows for each query row.

    Exact scan over all pairs; rows are ranked by increasing distance
    (squared Euclidean, or 1 - cosine similarity) with distance ties
    broken by the smaller train index.

    Args:
        query: (M, D) array.
        train: (N, D) array.
        k: neighbors per query, 1 <= k <= N.
        metric: Metric.EUCLIDEAN or Metric.COSINE.

    Returns:
        (M, k) int64 index array.

    Raises:
        ShapeMismatch: dimension disagreement.
        KTooLarge: k exceeds the number of train rows.
    """
    q = np.ascontiguousarray(query, dtype=np.float64)
    t = np.ascontiguousarray(train, dtype=np.float64)
    if q.ndim != 2 or t.ndim != 2:
        raise ShapeMismatch(f"query/train must be 2-D, got {q.shape} and {t.shape}")
    if q.shape[1] != t.shape[1]:
        raise ShapeMismatch(f"dim mismatch: query D={q.shape[1]}, train D={t.shape[1]}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > t.shape[0]:
        raise KTooLarge(f"k={k} > train rows N={t.shape[0]}")
    if metric is Metric.EUCLIDEAN:
        dists = _kernels.sqdist_matrix(q, t)
    elif metric is Metric.COSINE:
        dists = 1.0 - _kernels.dot_matrix(l2_normalize(q), l2_normalize(t))
    else:
        raise TypeError(f"metric must be a Metric, got {metric!r}")
    # Stable argsort realizes the smaller-index tie rule.
    order = np.argsort(dists, axis=1, kind="stable")
    return order[:, :k]


def nn_accuracy(test_set, train_set, metric=Metric.COSINE, normalize=True):
    """1-NN label-transfer accuracy from train to test embeddings.

    Args:
        test_set: EmbeddingSet of queries.
        train_set: EmbeddingSet of support rows.
        metric: distance used for the scan.
        normalize: L2-normalize both matrices first.

    Returns:
        Fraction of test rows whose nearest train row shares the label.
    """
    if test_set.dim != train_set.dim:
        raise ShapeMismatch(f"dim mismatch: test D={test_set.dim}, train D={train_set.dim}")
    if test_set.meta.num_classes != train_set.meta.num_classes:
        raise ShapeMismatch(
            f"label spaces differ: {test_set.meta.num_classes} vs {train_set.meta.num_classes}"
        )
    q = test_set.matrix.astype(np.float64)
    t = train_set.matrix.astype(np.float64)
    if normalize:
        q = l2_normalize(q)
        t = l2_normalize(t)
    idx = nearest(q, t, 1, metric)[:, 0]
    return float(np.mean(train_set.labels[idx] == test_set.labels))
