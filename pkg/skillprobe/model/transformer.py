"""
Pre-LN Transformer encoder with a tied masked-LM head and a hand-written backward pass.

Classification input layout is ``[p_1..p_l, MASK, w_1..w_n]`` with right padding (PAD keys are
masked out of attention). Logits are read at the MASK position through the token embedding table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from skillprobe.config import MASK_ID, PAD_ID
from skillprobe.exception import LengthException, ModelStateException, ShapeException, VocabException
from skillprobe.model.hooks import ActivationHook
from skillprobe.model.weights import PROMPT_TENSOR, AdapterParams, ModelWeights, TrainableSet, layer_prefix
from skillprobe.numerics.kernels import get_activation, layernorm_backward, layernorm_forward, matmul, softmax


@dataclass
class ActivationTrace:
    """FFN inner activations at captured positions, indexed (sample, position, layer, neuron)."""

    values: np.ndarray
    positions: Tuple[int, ...]
    token_mask: np.ndarray  # (batch, positions): False where the position is padding

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)


@dataclass
class _LayerCache:
    h_in: np.ndarray
    xhat1: np.ndarray
    inv1: np.ndarray
    u: np.ndarray
    qh: np.ndarray
    kh: np.ndarray
    vh: np.ndarray
    probs: np.ndarray
    ctx: np.ndarray
    attn_adapter: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]
    xhat2: np.ndarray
    inv2: np.ndarray
    w_in: np.ndarray
    z: np.ndarray
    a: np.ndarray
    ffn_adapter: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass
class Tape:
    """Intermediates retained by a forward pass for the matching backward."""

    weights: ModelWeights
    adapters: Optional[AdapterParams]
    input_ids: np.ndarray  # (batch, T) with -1 at prompt positions
    num_prompts: int
    out_rows: np.ndarray
    out_cols: np.ndarray
    layers: List[_LayerCache] = field(default_factory=list)
    xhat_final: Optional[np.ndarray] = None
    inv_final: Optional[np.ndarray] = None
    h_selected: Optional[np.ndarray] = None
    hooked: bool = False


@dataclass
class ForwardResult:
    logits: np.ndarray
    trace: Optional[ActivationTrace] = None
    tape: Optional[Tape] = None
    key_valid: Optional[np.ndarray] = None


def prompt_positions(num_prompts: int) -> List[int]:
    return list(range(num_prompts))


def input_positions(num_prompts: int, num_tokens: int) -> List[int]:
    """Sequence positions of the input tokens (after prompts and MASK)."""
    return list(range(num_prompts + 1, num_prompts + 1 + num_tokens))


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    batch, length, width = x.shape
    return x.reshape(batch, length, num_heads, width // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    batch, heads, length, head_dim = x.shape
    return x.transpose(0, 2, 1, 3).reshape(batch, length, heads * head_dim)


def _flat(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1])


def _adapter_forward(adapters: AdapterParams, layer: int, site: str, x: np.ndarray, f):
    down, down_bias, up, up_bias = adapters.site(layer, site)
    pre = matmul(x, down) + down_bias
    hidden = f(pre)
    return x + matmul(hidden, up) + up_bias, (x, pre, hidden)


def _adapter_backward(adapters, layer, site, cache, dout, f_grad, grads, trainable):
    down, _, up, _ = adapters.site(layer, site)
    x, pre, hidden = cache
    prefix = f"{layer_prefix(layer)}{site}."
    dhidden = dout @ up.T
    dpre = dhidden * f_grad(pre)
    if prefix + "up" in trainable:
        grads[prefix + "up"] = _flat(hidden).T @ _flat(dout)
    if prefix + "up_bias" in trainable:
        grads[prefix + "up_bias"] = _flat(dout).sum(axis=0)
    if prefix + "down" in trainable:
        grads[prefix + "down"] = _flat(x).T @ _flat(dpre)
    if prefix + "down_bias" in trainable:
        grads[prefix + "down_bias"] = _flat(dpre).sum(axis=0)
    return dout + dpre @ down.T


def _validate_ids(weights: ModelWeights, token_ids: np.ndarray, extra_positions: int) -> np.ndarray:
    ids = np.asarray(token_ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise ShapeException(f"token_ids must be (batch, length), got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= weights.config.vocab_size):
        bad = ids[(ids < 0) | (ids >= weights.config.vocab_size)][0]
        raise VocabException(f"token id {int(bad)} outside vocabulary of size {weights.config.vocab_size}")
    total = ids.shape[1] + extra_positions
    if total > weights.config.max_positions:
        raise LengthException(f"sequence length {total} exceeds max_positions={weights.config.max_positions}")
    return ids.astype(np.int64)


# -----------------------------------------------------------------------------
# Forward
# -----------------------------------------------------------------------------


def _encode(
    weights: ModelWeights,
    x: np.ndarray,
    key_valid: np.ndarray,
    adapters: Optional[AdapterParams],
    hook: Optional[ActivationHook],
    capture_positions: Optional[Sequence[int]],
    tape: Optional[Tape],
) -> Tuple[np.ndarray, Optional[List[np.ndarray]]]:
    config = weights.config
    f, _ = get_activation(config.activation)
    scale = 1.0 / math.sqrt(config.head_dim)
    attend = key_valid[:, None, None, :]
    captured: Optional[List[np.ndarray]] = [] if capture_positions is not None else None
    positions = list(capture_positions) if capture_positions is not None else []

    h = x
    for layer in range(config.num_layers):
        p = layer_prefix(layer)
        u, xhat1, inv1 = layernorm_forward(h, weights[p + "ln1.gain"], weights[p + "ln1.bias"])
        qh = _split_heads(matmul(u, weights[p + "attn.wq"]) + weights[p + "attn.bq"], config.num_heads)
        kh = _split_heads(matmul(u, weights[p + "attn.wk"]) + weights[p + "attn.bk"], config.num_heads)
        vh = _split_heads(matmul(u, weights[p + "attn.wv"]) + weights[p + "attn.bv"], config.num_heads)
        scores = np.where(attend, (qh @ kh.transpose(0, 1, 3, 2)) * scale, -np.inf)
        probs = softmax(scores, axis=-1)
        ctx = _merge_heads(probs @ vh)
        attn_out = matmul(ctx, weights[p + "attn.wo"]) + weights[p + "attn.bo"]
        attn_cache = None
        if adapters is not None:
            attn_out, attn_cache = _adapter_forward(adapters, layer, "adapter_attn", attn_out, f)
        h_mid = h + attn_out

        w_in, xhat2, inv2 = layernorm_forward(h_mid, weights[p + "ln2.gain"], weights[p + "ln2.bias"])
        k_mat, b1, v_mat, b2 = weights.ffn(layer)
        z = matmul(w_in, k_mat.T) + b1
        a = f(z)
        if hook is not None:
            a = hook(layer, a, key_valid)
        if captured is not None:
            captured.append(a[:, positions, :])
        ffn_out = matmul(a, v_mat) + b2
        ffn_cache = None
        if adapters is not None:
            ffn_out, ffn_cache = _adapter_forward(adapters, layer, "adapter_ffn", ffn_out, f)

        if tape is not None:
            tape.layers.append(
                _LayerCache(
                    h_in=h,
                    xhat1=xhat1,
                    inv1=inv1,
                    u=u,
                    qh=qh,
                    kh=kh,
                    vh=vh,
                    probs=probs,
                    ctx=ctx,
                    attn_adapter=attn_cache,
                    xhat2=xhat2,
                    inv2=inv2,
                    w_in=w_in,
                    z=z,
                    a=a,
                    ffn_adapter=ffn_cache,
                )
            )
        h = h_mid + ffn_out
    return h, captured


def _read_out(weights: ModelWeights, h: np.ndarray, rows: np.ndarray, cols: np.ndarray, tape: Optional[Tape]) -> np.ndarray:
    hf, xhat_f, inv_f = layernorm_forward(h, weights["final_ln.gain"], weights["final_ln.bias"])
    selected = hf[rows, cols]
    logits = matmul(selected, weights["embed.tokens"].T)
    if tape is not None:
        tape.xhat_final = xhat_f
        tape.inv_final = inv_f
        tape.h_selected = selected
    return logits


def _build_trace(captured: List[np.ndarray], positions: Sequence[int], key_valid: np.ndarray) -> ActivationTrace:
    widths = {block.shape[-1] for block in captured}
    if len(widths) != 1:
        raise ModelStateException(f"cannot stack activations of layers with different widths {sorted(widths)}")
    values = np.stack(captured, axis=2)
    return ActivationTrace(values=values, positions=tuple(positions), token_mask=key_valid[:, list(positions)])


def forward(
    weights: ModelWeights,
    token_ids: np.ndarray,
    prompts: Optional[np.ndarray] = None,
    adapters: Optional[AdapterParams] = None,
    capture_positions: Optional[Sequence[int]] = None,
    hook: Optional[ActivationHook] = None,
    retain: bool = False,
) -> ForwardResult:
    """Logits at the MASK position for ``[prompts, MASK, tokens]``; optional trace at ``capture_positions``."""
    num_prompts = 0 if prompts is None else int(prompts.shape[0])
    if prompts is not None and prompts.shape != (num_prompts, weights.config.d):
        raise ShapeException(f"prompts must be (l, {weights.config.d}), got {prompts.shape}")
    ids = _validate_ids(weights, token_ids, num_prompts + 1)
    batch, num_tokens = ids.shape
    length = num_prompts + 1 + num_tokens

    embed = weights["embed.tokens"]
    x = np.empty((batch, length, weights.config.d), dtype=np.float64)
    if num_prompts:
        x[:, :num_prompts] = prompts
    x[:, num_prompts] = embed[MASK_ID]
    x[:, num_prompts + 1 :] = embed[ids]
    x += weights["embed.positions"][:length]

    key_valid = np.ones((batch, length), dtype=bool)
    key_valid[:, num_prompts + 1 :] = ids != PAD_ID

    full_ids = np.full((batch, length), -1, dtype=np.int64)
    full_ids[:, num_prompts] = MASK_ID
    full_ids[:, num_prompts + 1 :] = ids

    rows = np.arange(batch)
    cols = np.full(batch, num_prompts)
    tape = Tape(weights, adapters, full_ids, num_prompts, rows, cols, hooked=hook is not None) if retain else None
    h, captured = _encode(weights, x, key_valid, adapters, hook, capture_positions, tape)
    logits = _read_out(weights, h, rows, cols, tape)
    trace = _build_trace(captured, capture_positions, key_valid) if captured is not None else None
    return ForwardResult(logits=logits, trace=trace, tape=tape, key_valid=key_valid)


def forward_mlm(
    weights: ModelWeights,
    token_ids: np.ndarray,
    target_rows: np.ndarray,
    target_cols: np.ndarray,
    retain: bool = False,
) -> ForwardResult:
    """Masked-LM logits at ``(target_rows, target_cols)`` of a prompt-free batch."""
    ids = _validate_ids(weights, token_ids, 0)
    batch, length = ids.shape
    x = weights["embed.tokens"][ids] + weights["embed.positions"][:length]
    key_valid = ids != PAD_ID
    rows = np.asarray(target_rows, dtype=np.int64)
    cols = np.asarray(target_cols, dtype=np.int64)
    tape = Tape(weights, None, ids, 0, rows, cols) if retain else None
    h, _ = _encode(weights, x, key_valid, None, None, None, tape)
    logits = _read_out(weights, h, rows, cols, tape)
    return ForwardResult(logits=logits, tape=tape, key_valid=key_valid)


# -----------------------------------------------------------------------------
# Backward
# -----------------------------------------------------------------------------


def backward(tape: Optional[Tape], dlogits: np.ndarray, trainable: TrainableSet) -> Dict[str, np.ndarray]:
    """Gradients of the loss for exactly the tensors named in ``trainable``.

    ``dlogits`` is the loss gradient w.r.t. the logits returned by the retained forward.
    """
    if tape is None or tape.xhat_final is None:
        raise ModelStateException("backward called without a retained forward pass")
    if tape.hooked:
        raise ModelStateException("backward through a hooked forward pass is not supported")

    weights = tape.weights
    config = weights.config
    _, f_grad = get_activation(config.activation)
    scale = 1.0 / math.sqrt(config.head_dim)
    grads: Dict[str, np.ndarray] = {}
    embed = weights["embed.tokens"]
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (len(tape.out_rows), config.vocab_size):
        raise ShapeException(f"dlogits shape {dlogits.shape} does not match forward output")

    d_embed = np.zeros_like(embed) if "embed.tokens" in trainable else None
    if d_embed is not None:
        d_embed += dlogits.T @ tape.h_selected

    batch, length, width = tape.layers[0].h_in.shape if tape.layers else (0, 0, config.d)
    dhf = np.zeros((batch, length, width), dtype=np.float64)
    np.add.at(dhf, (tape.out_rows, tape.out_cols), dlogits @ embed)
    dh, dgain, dbias = layernorm_backward(dhf, tape.xhat_final, tape.inv_final, weights["final_ln.gain"])
    if "final_ln.gain" in trainable:
        grads["final_ln.gain"] = dgain
    if "final_ln.bias" in trainable:
        grads["final_ln.bias"] = dbias

    for layer in reversed(range(config.num_layers)):
        cache = tape.layers[layer]
        p = layer_prefix(layer)
        k_mat, _, v_mat, _ = weights.ffn(layer)

        d_ffn = dh
        if cache.ffn_adapter is not None:
            d_ffn = _adapter_backward(tape.adapters, layer, "adapter_ffn", cache.ffn_adapter, dh, f_grad, grads, trainable)
        if p + "ffn.v" in trainable:
            grads[p + "ffn.v"] = _flat(cache.a).T @ _flat(d_ffn)
        if p + "ffn.b2" in trainable:
            grads[p + "ffn.b2"] = _flat(d_ffn).sum(axis=0)
        dz = (d_ffn @ v_mat.T) * f_grad(cache.z)
        if p + "ffn.k" in trainable:
            grads[p + "ffn.k"] = _flat(dz).T @ _flat(cache.w_in)
        if p + "ffn.b1" in trainable:
            grads[p + "ffn.b1"] = _flat(dz).sum(axis=0)
        dln2, dgain2, dbias2 = layernorm_backward(dz @ k_mat, cache.xhat2, cache.inv2, weights[p + "ln2.gain"])
        if p + "ln2.gain" in trainable:
            grads[p + "ln2.gain"] = dgain2
        if p + "ln2.bias" in trainable:
            grads[p + "ln2.bias"] = dbias2
        dh_mid = dh + dln2

        d_attn = dh_mid
        if cache.attn_adapter is not None:
            d_attn = _adapter_backward(
                tape.adapters, layer, "adapter_attn", cache.attn_adapter, dh_mid, f_grad, grads, trainable
            )
        if p + "attn.wo" in trainable:
            grads[p + "attn.wo"] = _flat(cache.ctx).T @ _flat(d_attn)
        if p + "attn.bo" in trainable:
            grads[p + "attn.bo"] = _flat(d_attn).sum(axis=0)
        dctx = _split_heads(d_attn @ weights[p + "attn.wo"].T, config.num_heads)
        dprobs = dctx @ cache.vh.transpose(0, 1, 3, 2)
        dvh = cache.probs.transpose(0, 1, 3, 2) @ dctx
        dscores = cache.probs * (dprobs - (dprobs * cache.probs).sum(axis=-1, keepdims=True)) * scale
        dq = _merge_heads(dscores @ cache.kh)
        dk = _merge_heads(dscores.transpose(0, 1, 3, 2) @ cache.qh)
        dv = _merge_heads(dvh)
        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            if f"{p}attn.w{name}" in trainable:
                grads[f"{p}attn.w{name}"] = _flat(cache.u).T @ _flat(dproj)
            if f"{p}attn.b{name}" in trainable:
                grads[f"{p}attn.b{name}"] = _flat(dproj).sum(axis=0)
        du = dq @ weights[p + "attn.wq"].T + dk @ weights[p + "attn.wk"].T + dv @ weights[p + "attn.wv"].T
        dln1, dgain1, dbias1 = layernorm_backward(du, cache.xhat1, cache.inv1, weights[p + "ln1.gain"])
        if p + "ln1.gain" in trainable:
            grads[p + "ln1.gain"] = dgain1
        if p + "ln1.bias" in trainable:
            grads[p + "ln1.bias"] = dbias1
        dh = dh_mid + dln1

    if "embed.positions" in trainable:
        d_pos = np.zeros_like(weights["embed.positions"])
        d_pos[:length] = dh.sum(axis=0)
        grads["embed.positions"] = d_pos
    if d_embed is not None:
        token_rows = tape.input_ids >= 0
        np.add.at(d_embed, tape.input_ids[token_rows], dh[token_rows])
        grads["embed.tokens"] = d_embed
    if PROMPT_TENSOR in trainable and tape.num_prompts:
        grads[PROMPT_TENSOR] = dh[:, : tape.num_prompts].sum(axis=0)
    return grads
