"""Softmax probe: gradient correctness, optimizer agreement, caching."""

import math
import struct

import numpy as np
import pytest

from vpbench.errors import FormatError, ShapeMismatch
from vpbench.probe import (
    LbfgsOptions,
    ProbeModel,
    accuracy,
    deserialize_probe,
    loss_and_grad,
    predict,
    serialize_probe,
    train_probe,
)


def _loss_only(W, b, X, y, lam):
    return loss_and_grad(W, b, X, y, lam)[0]


def test_gradient_matches_central_differences():
    """Analytic gradient vs finite differences over full parameter vectors."""
    rng = np.random.default_rng(1001)
    h = 1e-6
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(3, 12))
        d = int(rng.integers(1, 6))
        c = int(rng.integers(2, 5))
        lam = float(rng.choice([0.0, 1e-3, 0.1]))
        W = rng.standard_normal((c, d))
        b = rng.standard_normal(c)
        X = rng.standard_normal((n, d))
        y = rng.integers(0, c, n)
        _, (gw, gb) = loss_and_grad(W, b, X, y, lam)
        for idx in np.ndindex(c, d):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += h
            Wm[idx] -= h
            fd = (_loss_only(Wp, b, X, y, lam) - _loss_only(Wm, b, X, y, lam)) / (2 * h)
            worst = max(worst, abs(fd - gw[idx]) / (1.0 + abs(gw[idx])))
        for k in range(c):
            bp, bm = b.copy(), b.copy()
            bp[k] += h
            bm[k] -= h
            fd = (_loss_only(W, bp, X, y, lam) - _loss_only(W, bm, X, y, lam)) / (2 * h)
            worst = max(worst, abs(fd - gb[k]) / (1.0 + abs(gb[k])))
    assert worst < 1e-5


def test_zero_weights_loss_is_ln_c():
    rng = np.random.default_rng(7)
    for c in (2, 3, 7, 10):
        X = rng.standard_normal((11, 4)) * 50.0
        y = rng.integers(0, c, 11)
        loss, (gw, gb) = loss_and_grad(np.zeros((c, 4)), np.zeros(c), X, y, 0.5)
        assert abs(loss - math.log(c)) < 1e-12
        assert np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))


def test_loss_shape_checks():
    X = np.zeros((4, 3))
    y = np.zeros(4, dtype=np.int64)
    with pytest.raises(ShapeMismatch):
        loss_and_grad(np.zeros((2, 5)), np.zeros(2), X, y, 0.0)
    with pytest.raises(ShapeMismatch):
        loss_and_grad(np.zeros((2, 3)), np.zeros(3), X, y, 0.0)
    with pytest.raises(ShapeMismatch):
        loss_and_grad(np.zeros((2, 3)), np.zeros(2), X, y[:3], 0.0)
    with pytest.raises(ShapeMismatch):
        loss_and_grad(np.zeros((2, 3)), np.zeros(2), X, np.array([0, 1, 2, 0]), 0.0)
    with pytest.raises(ShapeMismatch):
        loss_and_grad(np.zeros((2, 3)), np.zeros(2), X[0], y[:1], 0.0)


def _overlapping_problem(seed, n=60, d=5, c=3):
    """Gaussian class blobs with heavy overlap, never linearly separable."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((c, d))
    y = np.arange(n) % c
    X = centers[y] + rng.standard_normal((n, d))
    return X, y


def _gd_reference(X, y, lam, lr=0.05, tol=1e-10, max_steps=200_000):
    c = int(y.max()) + 1
    W = np.zeros((c, X.shape[1]))
    b = np.zeros(c)
    for _ in range(max_steps):
        _, (gw, gb) = loss_and_grad(W, b, X, y, lam)
        gnorm = max(float(np.max(np.abs(gw))), float(np.max(np.abs(gb))))
        if gnorm <= tol:
            return W, b, True
        W -= lr * gw
        b -= lr * gb
    return W, b, False


def test_lbfgs_agrees_with_plain_gradient_descent():
    """Both optimizers reach the same unique strongly-convex minimum."""
    for seed in (0, 1):
        X, y = _overlapping_problem(seed)
        lam = 1e-2
        W_gd, b_gd, ok = _gd_reference(X, y, lam)
        assert ok, "reference descent did not converge"
        model = train_probe(X, y, lam, LbfgsOptions(max_iters=2000, grad_tol=1e-9))
        assert model.converged
        assert float(np.max(np.abs(model.W - W_gd))) < 1e-6
        assert float(np.max(np.abs(model.b - b_gd))) < 1e-6


def test_training_is_deterministic():
    X, y = _overlapping_problem(3)
    m1 = train_probe(X, y, 1e-3)
    m2 = train_probe(X, y, 1e-3)
    assert np.array_equal(m1.W, m2.W) and np.array_equal(m1.b, m2.b)
    assert m1.converged and m1.final_grad_norm <= 1e-6


def test_training_is_row_order_invariant():
    X, y = _overlapping_problem(4)
    perm = np.random.default_rng(8).permutation(len(y))
    opts = LbfgsOptions(max_iters=2000, grad_tol=1e-9)
    m1 = train_probe(X, y, 1e-2, opts)
    m2 = train_probe(X[perm], y[perm], 1e-2, opts)
    assert float(np.max(np.abs(m1.W - m2.W))) < 1e-5
    probe_pts = np.random.default_rng(9).standard_normal((50, X.shape[1]))
    assert np.array_equal(predict(m1, probe_pts), predict(m2, probe_pts))


def test_huge_l2_collapses_to_class_priors():
    rng = np.random.default_rng(10)
    y = np.array([0] * 24 + [1] * 10 + [2] * 6)
    X = rng.standard_normal((40, 4))
    model = train_probe(X, y, 1e6)
    assert float(np.max(np.abs(model.W))) < 1e-4
    pred = predict(model, rng.standard_normal((30, 4)))
    assert np.all(pred == 0)  # majority class wins once W is crushed
    # biases order like the class frequencies
    assert model.b[0] > model.b[1] > model.b[2]


def test_predict_breaks_ties_toward_smaller_index():
    model = ProbeModel(
        W=np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        b=np.zeros(3),
        lam=0.0,
        converged=True,
        final_grad_norm=0.0,
    )
    pred = predict(model, np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    assert pred.tolist() == [0, 2, 0]


def test_train_input_validation():
    X = np.zeros((2, 3))
    with pytest.raises(ShapeMismatch):
        train_probe(X, np.array([0, 1, 1]), 0.1)
    with pytest.raises(ShapeMismatch):
        train_probe(X, np.array([0, 2]), 0.1)  # C=3 but only 2 rows
    with pytest.raises(ShapeMismatch):
        predict(train_probe(np.eye(3), np.array([0, 1, 2]), 0.1), np.zeros((2, 5)))
    with pytest.raises(ShapeMismatch):
        accuracy(np.zeros(3), np.zeros(4))


def test_accuracy_values():
    assert accuracy([0, 1, 2, 1], [0, 1, 1, 1]) == 0.75
    assert accuracy([5], [5]) == 1.0


def test_model_validation():
    with pytest.raises(ValueError):
        ProbeModel(np.zeros((1, 3)), np.zeros(1), 0.0, True, 0.0)
    with pytest.raises(ValueError):
        ProbeModel(np.zeros((2, 3)), np.zeros(3), 0.0, True, 0.0)
    with pytest.raises(ValueError):
        ProbeModel(np.full((2, 3), np.inf), np.zeros(2), 0.0, True, 0.0)


def test_probe_cache_roundtrip():
    X, y = _overlapping_problem(11)
    model = train_probe(X, y, 2e-3)
    blob = serialize_probe(model)
    back = deserialize_probe(blob)
    assert np.array_equal(back.W, model.W)
    assert np.array_equal(back.b, model.b)
    assert back.lam == model.lam
    assert back.converged and back.final_grad_norm == 0.0


def test_probe_cache_format_errors():
    X, y = _overlapping_problem(12)
    blob = bytearray(serialize_probe(train_probe(X, y, 1e-3)))
    with pytest.raises(FormatError):
        deserialize_probe(b"PRB1\x01")  # too short
    bad = bytes(blob).replace(b"PRB1", b"PRBX", 1)
    with pytest.raises(FormatError) as ei:
        deserialize_probe(bad)
    assert ei.value.offset == 0
    v2 = bytearray(blob)
    v2[4:8] = struct.pack("<I", 9)
    with pytest.raises(FormatError) as ei:
        deserialize_probe(bytes(v2))
    assert ei.value.offset == 4
    with pytest.raises(FormatError):
        deserialize_probe(bytes(blob) + b"\x00")
    with pytest.raises(FormatError):
        deserialize_probe(bytes(blob[:-1]))
