"""Seeded counter-based random generator with derivable independent streams."""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

Shape = Union[int, Tuple[int, ...]]


class SeededRng:
    """Philox generator keyed by ``(seed, stream)``.

    Equal ``(seed, stream)`` pairs give equal draw sequences on every platform; distinct
    streams are statistically independent.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError(f"seed and stream must be non-negative, got seed={seed}, stream={stream}")
        self.seed = int(seed)
        self.stream = int(stream)
        self._generator = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, self.stream])))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream})"

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def spawn(self, stream: int) -> "SeededRng":
        """Independent generator for a sub-task, derived from this seed and a stream id."""
        return SeededRng(self.seed, stream)

    def normal(self, size: Shape, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self._generator.normal(loc, scale, size=size)

    def truncated_normal(self, size: Shape, std: float, bound: float = 2.0) -> np.ndarray:
        """Normal draws with |x| > bound*std resampled until inside the bound."""
        values = self._generator.normal(0.0, std, size=size)
        limit = bound * std
        outside = np.abs(values) > limit
        while np.any(outside):
            values[outside] = self._generator.normal(0.0, std, size=int(outside.sum()))
            outside = np.abs(values) > limit
        return values

    def integers(self, low: int, high: Optional[int] = None, size: Optional[Shape] = None):
        return self._generator.integers(low, high, size=size)

    def random(self, size: Optional[Shape] = None):
        return self._generator.random(size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, values: Sequence, size: Optional[Shape] = None, replace: bool = True):
        return self._generator.choice(np.asarray(values), size=size, replace=replace)


def cell_stream(*indices: int, width: int = 1 << 16) -> int:
    """Fold nested indices (e.g. trial, fraction) into a single stream id."""
    stream = 0
    for index in indices:
        stream = stream * width + int(index)
    return stream


def derive_seed(seed: int, *keys: int) -> int:
    """Non-negative 63-bit seed for a keyed sub-experiment (e.g. one task of a suite)."""
    state = np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1, dtype=np.uint64)[0]
    return int(state) & ((1 << 63) - 1)
