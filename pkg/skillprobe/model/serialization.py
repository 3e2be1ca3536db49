"""
Versioned binary artifact files.

Layout: 4-byte magic, u32 version, u32 header length, UTF-8 JSON header, then little-endian
float32 tensors in the order the header lists them.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from skillprobe.config import ModelConfig
from skillprobe.exception import FormatException, TruncatedFileException
from skillprobe.model.weights import AdapterParams, ModelWeights, layer_prefix, tensor_names

WEIGHTS_MAGIC = b"SKPW"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sII")

PathLike = Union[str, Path]


def write_blob(path: PathLike, magic: bytes, header: Dict[str, Any], arrays: Sequence[np.ndarray]) -> int:
    """Write header + float32 payload; returns the number of bytes written."""
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(array, dtype="<f4").tobytes() for array in arrays)
    blob = _PREAMBLE.pack(magic, FORMAT_VERSION, len(header_bytes)) + header_bytes + payload
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(blob)
    return len(blob)


def read_blob(path: PathLike, magic: bytes) -> Tuple[Dict[str, Any], bytes]:
    """Read and check the preamble; returns the parsed header and raw payload bytes."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise TruncatedFileException(f"{path}: file ends inside the preamble ({len(raw)} bytes)")
    found_magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if found_magic != magic:
        raise FormatException(f"{path}: bad magic {found_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatException(f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}")
    header_end = _PREAMBLE.size + header_len
    if len(raw) < header_end:
        raise TruncatedFileException(f"{path}: file ends inside the header")
    try:
        header = json.loads(raw[_PREAMBLE.size : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatException(f"{path}: unreadable header ({exc})") from exc
    return header, raw[header_end:]


def split_payload(path: PathLike, payload: bytes, shapes: Sequence[Sequence[int]]) -> List[np.ndarray]:
    expected = sum(int(np.prod(shape)) for shape in shapes) * 4
    if len(payload) < expected:
        raise TruncatedFileException(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise FormatException(f"{path}: {len(payload) - expected} trailing bytes after payload")
    arrays, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        block = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        arrays.append(block.astype(np.float64).reshape(tuple(shape)))
        offset += count * 4
    return arrays


def save_weights(weights: ModelWeights, path: PathLike) -> int:
    """Serialize weights (full or pruned); returns the file size in bytes."""
    names = tensor_names(weights.config.num_layers)
    header = {
        "config": asdict(weights.config),
        "kind": weights.kind,
        "pruned": weights.pruned,
        "kept_indices": {str(layer): [int(i) for i in idx] for layer, idx in sorted(weights.kept_indices.items())},
        "tensors": [[name, list(weights[name].shape)] for name in names],
    }
    return write_blob(path, WEIGHTS_MAGIC, header, [weights[name] for name in names])


def load_weights(path: PathLike) -> ModelWeights:
    header, payload = read_blob(path, WEIGHTS_MAGIC)
    try:
        config = ModelConfig.from_dict(header["config"])
        listed = [(str(name), [int(dim) for dim in shape]) for name, shape in header["tensors"]]
        kept = {int(layer): np.asarray(idx, dtype=np.int64) for layer, idx in header.get("kept_indices", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatException(f"{path}: malformed weights header ({exc})") from exc
    if [name for name, _ in listed] != tensor_names(config.num_layers):
        raise FormatException(f"{path}: tensor list does not match a {config.num_layers}-layer model")
    shapes = dict(listed)
    for layer, idx in kept.items():
        if shapes[layer_prefix(layer) + "ffn.k"][0] != len(idx):
            raise FormatException(f"{path}: kept index list of layer {layer} disagrees with FFN shape")

    arrays = split_payload(path, payload, [shape for _, shape in listed])
    weights = ModelWeights(
        config=config,
        tensors={name: array for (name, _), array in zip(listed, arrays)},
        kind=str(header.get("kind", "full")),
        kept_indices=kept,
    )
    weights.check_shapes()
    return weights


def header_size(path: PathLike) -> int:
    """Bytes before the float payload (preamble + JSON header)."""
    raw = Path(path).read_bytes()[: _PREAMBLE.size]
    _, _, header_len = _PREAMBLE.unpack(raw)
    return _PREAMBLE.size + header_len


ADAPTER_MAGIC = b"SKPA"


def save_adapters(adapters: AdapterParams, path: PathLike) -> int:
    names = sorted(adapters.names)
    header = {
        "bottleneck": int(adapters.bottleneck),
        "tensors": [[name, list(adapters.tensors[name].shape)] for name in names],
    }
    return write_blob(path, ADAPTER_MAGIC, header, [adapters.tensors[name] for name in names])


def load_adapters(path: PathLike) -> AdapterParams:
    header, payload = read_blob(path, ADAPTER_MAGIC)
    try:
        bottleneck = int(header["bottleneck"])
        listed = [(str(name), [int(dim) for dim in shape]) for name, shape in header["tensors"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatException(f"{path}: malformed adapter header ({exc})") from exc
    arrays = split_payload(path, payload, [shape for _, shape in listed])
    return AdapterParams(bottleneck=bottleneck, tensors={name: array for (name, _), array in zip(listed, arrays)})
