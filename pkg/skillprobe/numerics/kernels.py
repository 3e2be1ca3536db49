"""Dense kernels and elementwise nonlinearities used by the toy Transformer."""

from __future__ import annotations

from typing import Callable, Tuple

import numpy as np
from scipy.special import erf, logsumexp

from skillprobe.exception import ConfigException, NumericalException, ShapeException

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

LN_EPS = 1e-5


def _ensure_finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericalException(f"{what} produced non-finite values")
    return values


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product over the last axis of ``a`` and first axis of ``b``.

    Leading axes of ``a`` are treated as batch axes, so (B, T, d) @ (d, k) works.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeException(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _ensure_finite(a @ b, "matmul")


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU: x * Phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def relu(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x > 0.0).astype(np.float64)


_ACTIVATIONS = {
    "gelu": (gelu, gelu_grad),
    "relu": (relu, relu_grad),
}


def get_activation(name: str) -> Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]:
    """Return ``(f, f')`` for a configured activation name."""
    try:
        return _ACTIVATIONS[name]
    except KeyError as exc:
        raise ConfigException(f"Unknown activation '{name}'; expected one of {sorted(_ACTIVATIONS)}") from exc


def layernorm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LN_EPS):
    """Normalize over the last axis. Returns ``(y, xhat, inv_std)``; the latter two feed the backward."""
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    return xhat * gain + bias, xhat, inv_std


def layernorm_backward(dy: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray, gain: np.ndarray):
    """Return ``(dx, dgain, dbias)`` with parameter grads summed over all leading axes."""
    width = xhat.shape[-1]
    reduce_axes = tuple(range(dy.ndim - 1))
    dgain = (dy * xhat).sum(axis=reduce_axes)
    dbias = dy.sum(axis=reduce_axes)
    dxhat = dy * gain
    dx = (
        inv_std
        / width
        * (width * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    )
    return dx, dgain, dbias


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax; rows may contain -inf entries as long as one entry is finite."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over rows and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeException(f"cross_entropy expects (N, C) logits and (N,) targets, got {logits.shape}, {targets.shape}")
    rows = np.arange(logits.shape[0])
    log_norm = logsumexp(logits, axis=1)
    loss = float(np.mean(log_norm - logits[rows, targets]))
    grad = softmax(logits, axis=1)
    grad[rows, targets] -= 1.0
    grad /= logits.shape[0]
    return loss, grad
