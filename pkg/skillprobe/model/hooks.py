"""Activation hooks applied to FFN inner activations during a forward pass."""

from __future__ import annotations

from typing import Dict, Iterable, Mapping, Protocol

import numpy as np

from skillprobe.numerics.rng import SeededRng


class ActivationHook(Protocol):
    def __call__(self, layer: int, activations: np.ndarray, key_valid: np.ndarray) -> np.ndarray: ...


def group_by_layer(neurons: Iterable, num_layers: int) -> Dict[int, np.ndarray]:
    """Map ``NeuronId``-like objects (``.layer``, ``.index``) to sorted index arrays per layer."""
    buckets: Dict[int, list] = {layer: [] for layer in range(num_layers)}
    for neuron in neurons:
        buckets[int(neuron.layer)].append(int(neuron.index))
    return {layer: np.array(sorted(set(idx)), dtype=np.int64) for layer, idx in buckets.items() if idx}


class GaussianNoiseHook:
    """Adds fresh N(mu, sigma^2) noise to selected neurons at every position of every sample.

    A full-width noise block is drawn for every layer on every call, then masked to the selected
    neurons, so the noise a neuron receives depends only on the RNG stream and not on which other
    neurons are selected.
    """

    def __init__(self, neurons_by_layer: Mapping[int, np.ndarray], mu: float, sigma: float, rng: SeededRng):
        self.neurons_by_layer = {layer: np.asarray(idx, dtype=np.int64) for layer, idx in neurons_by_layer.items()}
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.rng = rng

    @property
    def is_noop(self) -> bool:
        empty = not any(len(idx) for idx in self.neurons_by_layer.values())
        return empty or (self.sigma == 0.0 and self.mu == 0.0)

    def __call__(self, layer: int, activations: np.ndarray, key_valid: np.ndarray) -> np.ndarray:
        if self.is_noop:
            return activations
        noise = self.rng.normal(activations.shape, loc=self.mu, scale=self.sigma)
        selected = self.neurons_by_layer.get(layer)
        if selected is None or len(selected) == 0:
            return activations
        perturbed = activations.copy()
        perturbed[..., selected] += noise[..., selected]
        return perturbed


class ClampHook:
    """Holds frozen neurons at constant values at every position."""

    def __init__(self, frozen: Mapping[int, np.ndarray], values: Mapping[int, np.ndarray]):
        self.frozen = {layer: np.asarray(idx, dtype=np.int64) for layer, idx in frozen.items()}
        self.values = {layer: np.asarray(val, dtype=np.float64) for layer, val in values.items()}

    def __call__(self, layer: int, activations: np.ndarray, key_valid: np.ndarray) -> np.ndarray:
        idx = self.frozen.get(layer)
        if idx is None or len(idx) == 0:
            return activations
        clamped = activations.copy()
        clamped[..., idx] = self.values[layer]
        return clamped
