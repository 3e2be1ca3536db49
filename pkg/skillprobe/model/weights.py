"""Parameter containers for the toy encoder: weights, adapters, neuron ids, trainable sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from skillprobe.config import ModelConfig
from skillprobe.exception import ConfigException, ShapeException
from skillprobe.numerics.rng import SeededRng

INIT_STD = 0.02

LAYER_TENSORS = (
    "ln1.gain",
    "ln1.bias",
    "attn.wq",
    "attn.bq",
    "attn.wk",
    "attn.bk",
    "attn.wv",
    "attn.bv",
    "attn.wo",
    "attn.bo",
    "ln2.gain",
    "ln2.bias",
    "ffn.k",
    "ffn.b1",
    "ffn.v",
    "ffn.b2",
)
BIAS_SUFFIXES = ("attn.bq", "attn.bk", "attn.bv", "attn.bo", "ffn.b1", "ffn.b2", "ln1.bias", "ln2.bias", "final_ln.bias")
ADAPTER_SITES = ("adapter_attn", "adapter_ffn")
ADAPTER_TENSORS = ("down", "down_bias", "up", "up_bias")


def layer_prefix(layer: int) -> str:
    return f"layers.{layer}."


def tensor_names(num_layers: int) -> List[str]:
    """Fixed tensor order used for initialization and the weight-file payload."""
    names = ["embed.tokens", "embed.positions"]
    for layer in range(num_layers):
        names.extend(layer_prefix(layer) + suffix for suffix in LAYER_TENSORS)
    names.extend(["final_ln.gain", "final_ln.bias"])
    return names


def is_bias(name: str) -> bool:
    return name.endswith(BIAS_SUFFIXES)


def tensor_shape(config: ModelConfig, name: str, width: Optional[int] = None) -> Tuple[int, ...]:
    """Shape of a named tensor; ``width`` overrides d_m for pruned FFN layers."""
    d, d_m = config.d, width if width is not None else config.d_m
    if name == "embed.tokens":
        return (config.vocab_size, d)
    if name == "embed.positions":
        return (config.max_positions, d)
    suffix = name.split(".", 2)[-1] if name.startswith("layers.") else name
    shapes = {
        "ln1.gain": (d,),
        "ln1.bias": (d,),
        "ln2.gain": (d,),
        "ln2.bias": (d,),
        "attn.wq": (d, d),
        "attn.wk": (d, d),
        "attn.wv": (d, d),
        "attn.wo": (d, d),
        "attn.bq": (d,),
        "attn.bk": (d,),
        "attn.bv": (d,),
        "attn.bo": (d,),
        "ffn.k": (d_m, d),
        "ffn.b1": (d_m,),
        "ffn.v": (d_m, d),
        "ffn.b2": (d,),
        "final_ln.gain": (d,),
        "final_ln.bias": (d,),
    }
    if suffix not in shapes:
        raise ShapeException(f"Unknown tensor name '{name}'")
    return shapes[suffix]


@dataclass(frozen=True, order=True)
class NeuronId:
    """One FFN inner neuron: row ``index`` of K and V in ``layer``."""

    layer: int
    index: int

    def validate(self, num_layers: int, d_m: int) -> None:
        if not (0 <= self.layer < num_layers and 0 <= self.index < d_m):
            raise ConfigException(f"{self} is outside {num_layers} layers x {d_m} neurons")

    def flat(self, d_m: int) -> int:
        return self.layer * d_m + self.index

    @classmethod
    def from_flat(cls, flat_index: int, d_m: int) -> "NeuronId":
        return cls(int(flat_index) // d_m, int(flat_index) % d_m)


@dataclass
class ModelWeights:
    """All parameters of the toy encoder keyed by tensor name.

    Pruned weights carry ``kept_indices`` per layer and reduced FFN shapes there.
    """

    config: ModelConfig
    tensors: Dict[str, np.ndarray]
    kind: str = "full"
    kept_indices: Dict[int, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def pruned(self) -> bool:
        return bool(self.kept_indices)

    @property
    def names(self) -> List[str]:
        return tensor_names(self.config.num_layers)

    def layer_width(self, layer: int) -> int:
        return int(self.tensors[layer_prefix(layer) + "ffn.k"].shape[0])

    def ffn(self, layer: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        prefix = layer_prefix(layer)
        return (
            self.tensors[prefix + "ffn.k"],
            self.tensors[prefix + "ffn.b1"],
            self.tensors[prefix + "ffn.v"],
            self.tensors[prefix + "ffn.b2"],
        )

    def bias_names(self) -> List[str]:
        return [name for name in self.names if is_bias(name)]

    def parameter_count(self) -> int:
        return int(sum(self.tensors[name].size for name in self.names))

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            config=self.config,
            tensors={name: value.copy() for name, value in self.tensors.items()},
            kind=self.kind,
            kept_indices={layer: idx.copy() for layer, idx in self.kept_indices.items()},
        )

    def with_tensors(self, updates: Mapping[str, np.ndarray]) -> "ModelWeights":
        """New weights sharing untouched arrays and replacing ``updates``."""
        unknown = set(updates) - set(self.tensors)
        if unknown:
            raise ShapeException(f"Unknown tensors in update: {sorted(unknown)}")
        tensors = dict(self.tensors)
        for name, value in updates.items():
            if value.shape != tensors[name].shape:
                raise ShapeException(f"update for '{name}' has shape {value.shape}, expected {tensors[name].shape}")
            tensors[name] = value
        return ModelWeights(self.config, tensors, self.kind, dict(self.kept_indices))

    def check_shapes(self) -> None:
        for name in self.names:
            if name not in self.tensors:
                raise ShapeException(f"missing tensor '{name}'")
            layer = int(name.split(".")[1]) if name.startswith("layers.") else None
            width = None
            if layer is not None and layer in self.kept_indices and ".ffn." in name:
                width = len(self.kept_indices[layer])
            expected = tensor_shape(self.config, name, width)
            if self.tensors[name].shape != expected:
                raise ShapeException(f"tensor '{name}' has shape {self.tensors[name].shape}, expected {expected}")

    def equals(self, other: "ModelWeights") -> bool:
        """Bitwise equality of every tensor."""
        if self.names != other.names:
            return False
        return all(np.array_equal(self.tensors[name], other.tensors[name]) for name in self.names)


def init_weights(config: ModelConfig, rng: SeededRng) -> ModelWeights:
    """Truncated-normal matrices (std 0.02), zero biases, unit layer-norm gains."""
    config.validate()
    tensors: Dict[str, np.ndarray] = {}
    for name in tensor_names(config.num_layers):
        shape = tensor_shape(config, name)
        if name.endswith(".gain"):
            tensors[name] = np.ones(shape, dtype=np.float64)
        elif is_bias(name):
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            tensors[name] = rng.truncated_normal(shape, INIT_STD)
    return ModelWeights(config=config, tensors=tensors)


# -----------------------------------------------------------------------------
# Adapters
# -----------------------------------------------------------------------------


@dataclass
class AdapterParams:
    """Bottleneck adapters after the attention and FFN sublayers of every layer."""

    bottleneck: int
    tensors: Dict[str, np.ndarray]

    def site(self, layer: int, site: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        prefix = f"{layer_prefix(layer)}{site}."
        return tuple(self.tensors[prefix + part] for part in ADAPTER_TENSORS)  # type: ignore[return-value]

    @property
    def names(self) -> List[str]:
        return list(self.tensors)

    def copy(self) -> "AdapterParams":
        return AdapterParams(self.bottleneck, {name: value.copy() for name, value in self.tensors.items()})

    def with_tensors(self, updates: Mapping[str, np.ndarray]) -> "AdapterParams":
        tensors = dict(self.tensors)
        tensors.update(updates)
        return AdapterParams(self.bottleneck, tensors)

    def equals(self, other: "AdapterParams") -> bool:
        return self.names == other.names and all(np.array_equal(self.tensors[n], other.tensors[n]) for n in self.names)


def init_adapters(config: ModelConfig, rng: SeededRng, bottleneck: int = 8) -> AdapterParams:
    """Down-projections drawn like other matrices; up-projections zero so each adapter starts as identity."""
    tensors: Dict[str, np.ndarray] = {}
    for layer in range(config.num_layers):
        for site in ADAPTER_SITES:
            prefix = f"{layer_prefix(layer)}{site}."
            tensors[prefix + "down"] = rng.truncated_normal((config.d, bottleneck), INIT_STD)
            tensors[prefix + "down_bias"] = np.zeros(bottleneck, dtype=np.float64)
            tensors[prefix + "up"] = np.zeros((bottleneck, config.d), dtype=np.float64)
            tensors[prefix + "up_bias"] = np.zeros(config.d, dtype=np.float64)
    return AdapterParams(bottleneck=bottleneck, tensors=tensors)


# -----------------------------------------------------------------------------
# Trainable sets
# -----------------------------------------------------------------------------

PROMPT_TENSOR = "prompts"


class TrainableKind(str, Enum):
    PROMPT = "prompt"
    BIASES = "biases"
    ADAPTERS = "adapters"
    ALL = "all"


@dataclass(frozen=True)
class TrainableSet:
    """Which tensors receive gradients in a backward pass."""

    kind: TrainableKind
    names: Tuple[str, ...]

    def __contains__(self, name: object) -> bool:
        return name in self.names

    @classmethod
    def prompt(cls) -> "TrainableSet":
        return cls(TrainableKind.PROMPT, (PROMPT_TENSOR,))

    @classmethod
    def biases(cls, weights: ModelWeights) -> "TrainableSet":
        return cls(TrainableKind.BIASES, tuple(weights.bias_names()))

    @classmethod
    def adapters(cls, adapters: AdapterParams) -> "TrainableSet":
        return cls(TrainableKind.ADAPTERS, tuple(adapters.names))

    @classmethod
    def all(cls, weights: ModelWeights) -> "TrainableSet":
        return cls(TrainableKind.ALL, tuple(weights.names))

    @classmethod
    def of(cls, kind: TrainableKind, names: Iterable[str]) -> "TrainableSet":
        return cls(kind, tuple(names))
