"""Multinomial logistic regression trained with L-BFGS.

The training objective is softmax cross-entropy averaged over rows plus
(lambda/2) * ||W||_F^2; the bias is unregularized, so the zero-weight
loss is exactly ln C. All optimization math is float64.
"""

import dataclasses
import struct

import numpy as np

from .errors import FormatError, ShapeMismatch

__all__ = [
    "ProbeModel",
    "LbfgsOptions",
    "loss_and_grad",
    "train_probe",
    "predict",
    "accuracy",
    "serialize_probe",
    "deserialize_probe",
]


@dataclasses.dataclass(frozen=True)
class LbfgsOptions:
    """L-BFGS knobs: memory pairs, iteration cap, gradient tolerance.

    The line search is strong Wolfe with c1=1e-4 and c2=0.9.
    """

    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError(f"memory must be >= 1, got {self.memory}")
        if self.grad_tol <= 0 or self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("tolerances must be positive")


@dataclasses.dataclass(frozen=True)
class ProbeModel:
    """Trained linear classifier: logits = X @ W.T + b."""

    W: np.ndarray
    b: np.ndarray
    lam: float
    converged: bool
    final_grad_norm: float

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[0] < 2:
            raise ValueError(f"W must be (C>=2, D), got {self.W.shape}")
        if self.b.shape != (self.W.shape[0],):
            raise ValueError(f"b shape {self.b.shape} does not match C={self.W.shape[0]}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("model weights have NaN/Inf entries")


def _check_training_inputs(W, b, X, y):
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-D, got shape {X.shape}")
    if W.ndim != 2 or W.shape[1] != X.shape[1]:
        raise ShapeMismatch(f"W shape {W.shape} does not match X dim {X.shape[1]}")
    if b.shape != (W.shape[0],):
        raise ShapeMismatch(f"b shape {b.shape} does not match C={W.shape[0]}")
    if y.shape != (X.shape[0],):
        raise ShapeMismatch(f"y shape {y.shape} does not match N={X.shape[0]}")
    if y.size and int(y.max()) >= W.shape[0]:
        raise ShapeMismatch(f"label {int(y.max())} >= C={W.shape[0]}")


def loss_and_grad(W, b, X, y, lam):
    """Softmax cross-entropy loss and its exact gradient.

    loss = -(1/N) sum_i log softmax(W x_i + b)[y_i] + (lam/2) ||W||_F^2
    with the softmax computed after max-subtraction. The bias is not
    regularized.

    Args:
        W: (C, D) float weights.
        b: (C,) float biases.
        X: (N, D) float features.
        y: (N,) integer labels below C.
        lam: L2 strength on W.

    Returns:
        (loss, (grad_W, grad_b)) in float64.

    Raises:
        ShapeMismatch: inconsistent shapes or out-of-range labels.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    _check_training_inputs(W, b, X, y)
    n = X.shape[0]
    logits = X @ W.T + b
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    exps = np.exp(shifted)
    denom = exps.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = -float(np.mean(log_probs[np.arange(n), y])) + 0.5 * lam * float(np.sum(W * W))

    probs = exps / denom
    probs[np.arange(n), y] -= 1.0
    probs /= n
    grad_w = probs.T @ X + lam * W
    grad_b = probs.sum(axis=0)
    return loss, (grad_w, grad_b)


def _two_loop(g, pairs):
    """L-BFGS two-loop recursion; returns the approximate H @ g."""
    q = g.copy()
    alphas = []
    for s, yv, rho in reversed(pairs):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * yv
    if pairs:
        s, yv, _ = pairs[-1]
        q *= float(np.dot(s, yv)) / float(np.dot(yv, yv))
    for (s, yv, rho), a in zip(pairs, reversed(alphas)):
        beta = rho * float(np.dot(yv, q))
        q += (a - beta) * s
    return q


def _zoom(fg, theta, d, f0, dphi0, alo, flo, ahi, c1, c2):
    for _ in range(60):
        a = 0.5 * (alo + ahi)
        fa, ga = fg(theta + a * d)
        dphia = float(np.dot(ga, d))
        if fa > f0 + c1 * a * dphi0 or fa >= flo:
            ahi = a
        else:
            if abs(dphia) <= -c2 * dphi0:
                return a, fa, ga
            if dphia * (ahi - alo) >= 0.0:
                ahi = alo
            alo, flo = a, fa
        if abs(ahi - alo) <= 1e-16 * max(1.0, abs(alo)):
            break
    return None


def _strong_wolfe(fg, theta, d, f0, g0, c1, c2):
    """Line search satisfying the strong Wolfe conditions, or None."""
    dphi0 = float(np.dot(g0, d))
    if dphi0 >= 0.0:
        return None
    a_prev, f_prev = 0.0, f0
    a = 1.0
    for i in range(25):
        fa, ga = fg(theta + a * d)
        dphia = float(np.dot(ga, d))
        if fa > f0 + c1 * a * dphi0 or (i > 0 and fa >= f_prev):
            return _zoom(fg, theta, d, f0, dphi0, a_prev, f_prev, a, c1, c2)
        if abs(dphia) <= -c2 * dphi0:
            return a, fa, ga
        if dphia >= 0.0:
            return _zoom(fg, theta, d, f0, dphi0, a, fa, a_prev, c1, c2)
        a_prev, f_prev = a, fa
        a *= 2.0
    return None


def train_probe(X_tr, y_tr, lam, opts=None, seed=0):
    """Train a multinomial logistic probe from W=0, b=0 with L-BFGS.

    Accepted iterates strictly decrease the loss (enforced by the Wolfe
    sufficient-decrease condition). Training is deterministic; `seed` is
    accepted for interface uniformity with the trial runners but draws
    nothing, since the start point is fixed at zero.

    Args:
        X_tr: (N, D) features, N >= C.
        y_tr: (N,) labels in [0, C); C is inferred as max(y)+1 (min 2).
        lam: L2 strength, >= 0.
        opts: LbfgsOptions; defaults used when None.
        seed: unused randomness hook, recorded nowhere.

    Returns:
        ProbeModel; converged=False with diagnostics on line-search
        failure or iteration cap, never an exception.
    """
    opts = opts or LbfgsOptions()
    X = np.asarray(X_tr, dtype=np.float64)
    y = np.asarray(y_tr)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeMismatch(f"X {X.shape} / y {y.shape} disagree")
    c = max(int(y.max()) + 1, 2) if y.size else 2
    if X.shape[0] < c:
        raise ShapeMismatch(f"need N >= C, got N={X.shape[0]}, C={c}")
    d = X.shape[1]

    def fg(theta):
        W = theta[: c * d].reshape(c, d)
        b = theta[c * d :]
        loss, (gw, gb) = loss_and_grad(W, b, X, y, lam)
        return loss, np.concatenate([gw.ravel(), gb])

    theta = np.zeros(c * d + c, dtype=np.float64)
    f, g = fg(theta)
    pairs = []
    converged = False
    for _ in range(opts.max_iters):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= opts.grad_tol:
            converged = True
            break
        direction = -_two_loop(g, pairs)
        if float(np.dot(direction, g)) >= 0.0:
            # Stale curvature can spoil the direction; fall back to steepest descent.
            pairs = []
            direction = -g
        hit = _strong_wolfe(fg, theta, direction, f, g, opts.c1, opts.c2)
        if hit is None:
            break
        a, f_new, g_new = hit
        step = a * direction
        yv = g_new - g
        sy = float(np.dot(step, yv))
        if sy > 1e-10 * float(np.linalg.norm(step)) * float(np.linalg.norm(yv)):
            pairs.append((step, yv, 1.0 / sy))
            if len(pairs) > opts.memory:
                pairs.pop(0)
        theta = theta + step
        f, g = f_new, g_new
    else:
        gnorm = float(np.max(np.abs(g)))
        converged = gnorm <= opts.grad_tol
    gnorm = float(np.max(np.abs(g)))
    if gnorm <= opts.grad_tol:
        converged = True
    W = theta[: c * d].reshape(c, d).copy()
    b = theta[c * d :].copy()
    return ProbeModel(W=W, b=b, lam=float(lam), converged=converged, final_grad_norm=gnorm)


def predict(model, X):
    """Argmax class of Wx + b per row; ties go to the smaller index."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.W.shape[1]:
        raise ShapeMismatch(f"X shape {X.shape} does not match D={model.W.shape[1]}")
    logits = X @ model.W.T + model.b
    return np.argmax(logits, axis=1)


def accuracy(pred, y):
    """Fraction of equal entries."""
    pred = np.asarray(pred)
    y = np.asarray(y)
    if pred.shape != y.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs y {y.shape}")
    return float(np.mean(pred == y))


def serialize_probe(model):
    """Pack a probe into the PRB1 cache blob (little-endian)."""
    c, d = model.W.shape
    return b"".join(
        [
            b"PRB1",
            struct.pack("<I", 1),
            struct.pack("<I", c),
            struct.pack("<I", d),
            model.W.astype("<f8").tobytes(order="C"),
            model.b.astype("<f8").tobytes(order="C"),
            struct.pack("<d", model.lam),
        ]
    )


def deserialize_probe(blob):
    """Parse a PRB1 blob.

    Convergence diagnostics are not persisted; a cached probe reads back
    as converged with final_grad_norm 0.0.
    """
    if len(blob) < 16:
        raise FormatError(f"blob too short ({len(blob)} bytes)", offset=len(blob))
    if blob[:4] != b"PRB1":
        raise FormatError(f"bad magic {blob[:4]!r}, expected b'PRB1'", offset=0)
    (version,) = struct.unpack("<I", blob[4:8])
    if version != 1:
        raise FormatError(f"unsupported version {version}", offset=4)
    c, d = struct.unpack("<II", blob[8:16])
    expected = 16 + 8 * c * d + 8 * c + 8
    if len(blob) != expected:
        raise FormatError(f"expected {expected} bytes, got {len(blob)}", offset=min(len(blob), expected))
    off = 16
    w = np.frombuffer(blob, dtype="<f8", count=c * d, offset=off).reshape(c, d)
    off += 8 * c * d
    b = np.frombuffer(blob, dtype="<f8", count=c, offset=off)
    off += 8 * c
    (lam,) = struct.unpack("<d", blob[off : off + 8])
    return ProbeModel(W=w.copy(), b=b.copy(), lam=lam, converged=True, final_grad_norm=0.0)
