"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from skillprobe.exception import NumericalException, ShapeException

DENOMINATOR_FLOOR = 1e-8


def _evaluate(f: Callable[[np.ndarray], float], value: np.ndarray) -> float:
    result = float(f(value))
    if not np.isfinite(result):
        raise NumericalException(f"objective returned non-finite value {result}")
    return result


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    param: np.ndarray,
    analytic_grad: np.ndarray,
    h: float = 1e-6,
    indices: Optional[Sequence[int]] = None,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``f`` at ``param``.

    ``indices`` restricts the check to selected flat entries. The relative error uses
    max(|analytic|, |numeric|, 1e-8) as its denominator.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    param = np.asarray(param, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    if param.shape != analytic_grad.shape:
        raise ShapeException(f"analytic gradient shape {analytic_grad.shape} does not match parameter shape {param.shape}")

    flat_indices = range(param.size) if indices is None else indices
    probe = param.copy()
    flat_probe = probe.reshape(-1)
    flat_analytic = analytic_grad.reshape(-1)

    worst = 0.0
    for index in flat_indices:
        original = flat_probe[index]
        flat_probe[index] = original + h
        plus = _evaluate(f, probe)
        flat_probe[index] = original - h
        minus = _evaluate(f, probe)
        flat_probe[index] = original

        numeric = (plus - minus) / (2.0 * h)
        analytic = flat_analytic[index]
        denominator = max(abs(analytic), abs(numeric), DENOMINATOR_FLOOR)
        worst = max(worst, abs(analytic - numeric) / denominator)
    return worst


def directional_check(
    f: Callable[[np.ndarray], float],
    param: np.ndarray,
    analytic_grad: np.ndarray,
    directions: np.ndarray,
    h: float = 1e-6,
) -> float:
    """Max relative error of directional derivatives along each row of ``directions``."""
    param = np.asarray(param, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    worst = 0.0
    for direction in directions:
        direction = np.asarray(direction, dtype=np.float64).reshape(param.shape)
        plus = _evaluate(f, param + h * direction)
        minus = _evaluate(f, param - h * direction)
        numeric = (plus - minus) / (2.0 * h)
        analytic = float(np.sum(analytic_grad * direction))
        denominator = max(abs(analytic), abs(numeric), DENOMINATOR_FLOOR)
        worst = max(worst, abs(analytic - numeric) / denominator)
    return worst
