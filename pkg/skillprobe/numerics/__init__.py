"""Numerical substrate: kernels, seeded RNG, Adam and gradient checking."""

from skillprobe.numerics.gradcheck import directional_check, finite_diff_check
from skillprobe.numerics.kernels import (
    cross_entropy,
    gelu,
    gelu_grad,
    get_activation,
    layernorm_backward,
    layernorm_forward,
    matmul,
    relu,
    relu_grad,
    softmax,
)
from skillprobe.numerics.optim import AdamState, adam_step
from skillprobe.numerics.rng import SeededRng, cell_stream, derive_seed

__all__ = [
    "AdamState",
    "SeededRng",
    "adam_step",
    "cell_stream",
    "derive_seed",
    "cross_entropy",
    "directional_check",
    "finite_diff_check",
    "gelu",
    "gelu_grad",
    "get_activation",
    "layernorm_backward",
    "layernorm_forward",
    "matmul",
    "relu",
    "relu_grad",
    "softmax",
]
