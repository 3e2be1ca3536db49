"""Bias-corrected Adam over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from skillprobe.exception import ShapeException


@dataclass
class AdamState:
    """First/second moments per named tensor plus the step counter."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], learning_rate: float = 0.001, **kwargs) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kwargs)
        for name, value in params.items():
            state.m[name] = np.zeros_like(value, dtype=np.float64)
            state.v[name] = np.zeros_like(value, dtype=np.float64)
        return state


def adam_step(state: AdamState, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Apply one Adam update and return the new parameter tensors.

    Input arrays are left untouched; ``state`` moments and step counter advance.
    """
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            raise ShapeException(f"missing gradient for parameter '{name}'")
        if grad.shape != value.shape:
            raise ShapeException(f"gradient shape {grad.shape} does not match parameter '{name}' shape {value.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(value, dtype=np.float64)
            state.v[name] = np.zeros_like(value, dtype=np.float64)
        elif state.m[name].shape != value.shape:
            raise ShapeException(f"accumulator shape {state.m[name].shape} does not match parameter '{name}' shape {value.shape}")

    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step

    updated: Dict[str, np.ndarray] = {}
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad
        m_hat = state.m[name] / bias1
        v_hat = state.v[name] / bias2
        updated[name] = value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated
