"""Toy Transformer encoder: weights, forward/backward, hooks, serialization, MLM pre-training."""

from skillprobe.model.batching import pad_sequences
from skillprobe.model.hooks import ClampHook, GaussianNoiseHook, group_by_layer
from skillprobe.model.pretrain import PretrainResult, mask_batch, mlm_pretrain
from skillprobe.model.serialization import load_adapters, load_weights, save_adapters, save_weights
from skillprobe.model.transformer import (
    ActivationTrace,
    ForwardResult,
    Tape,
    backward,
    forward,
    forward_mlm,
    input_positions,
    prompt_positions,
)
from skillprobe.model.weights import (
    AdapterParams,
    ModelWeights,
    NeuronId,
    TrainableKind,
    TrainableSet,
    init_adapters,
    init_weights,
    tensor_names,
)

__all__ = [
    "ActivationTrace",
    "AdapterParams",
    "ClampHook",
    "ForwardResult",
    "GaussianNoiseHook",
    "ModelWeights",
    "NeuronId",
    "PretrainResult",
    "Tape",
    "TrainableKind",
    "TrainableSet",
    "backward",
    "forward",
    "forward_mlm",
    "group_by_layer",
    "init_adapters",
    "init_weights",
    "input_positions",
    "load_adapters",
    "load_weights",
    "mask_batch",
    "mlm_pretrain",
    "pad_sequences",
    "prompt_positions",
    "save_adapters",
    "save_weights",
    "tensor_names",
]
