"""Tests for the toy encoder: forward, backward, hooks, serialization and MLM pre-training."""

import dataclasses
import struct

import numpy as np
import pytest

from skillprobe.config import PAD_ID, PretrainConfig
from skillprobe.exception import FormatException, LengthException, ModelStateException, ShapeException, TruncatedFileException, VocabException
from skillprobe.model import (
    ClampHook,
    GaussianNoiseHook,
    NeuronId,
    TrainableSet,
    backward,
    forward,
    group_by_layer,
    init_adapters,
    init_weights,
    load_adapters,
    load_weights,
    mask_batch,
    mlm_pretrain,
    pad_sequences,
    prompt_positions,
    save_adapters,
    save_weights,
)
from skillprobe.model.weights import PROMPT_TENSOR
from skillprobe.numerics import SeededRng, directional_check, gelu, softmax
from skillprobe.tuning.trainer import verbalizer_loss


@pytest.fixture
def batch():
    return pad_sequences([[90, 91, 92, 93], [100, 101], [95, 96, 97]])


@pytest.fixture
def prompts(tiny_model_config):
    return SeededRng(1).normal((3, tiny_model_config.d), scale=0.1)


class TestForward:
    """Shapes, padding and input validation."""

    def test_logit_shape(self, tiny_weights, batch, prompts):
        out = forward(tiny_weights, batch, prompts=prompts)
        assert out.logits.shape == (3, tiny_weights.config.vocab_size)

    def test_padding_does_not_change_logits(self, tiny_weights, prompts):
        short = forward(tiny_weights, np.array([[100, 101]]), prompts=prompts).logits
        padded = forward(tiny_weights, np.array([[100, 101, PAD_ID, PAD_ID]]), prompts=prompts).logits
        assert np.allclose(short, padded, atol=1e-12)

    def test_trace_captures_requested_positions(self, tiny_weights, batch, prompts):
        out = forward(tiny_weights, batch, prompts=prompts, capture_positions=[0, 1, 2])
        assert out.trace.shape == (3, 3, tiny_weights.config.num_layers, tiny_weights.config.d_m)
        assert out.trace.token_mask.all()

    def test_vocab_check(self, tiny_weights):
        with pytest.raises(VocabException):
            forward(tiny_weights, np.array([[tiny_weights.config.vocab_size]]))

    def test_length_check(self, tiny_weights):
        with pytest.raises(LengthException):
            forward(tiny_weights, np.full((1, tiny_weights.config.max_positions), 90))

    def test_prompt_shape_check(self, tiny_weights, batch):
        with pytest.raises(ShapeException):
            forward(tiny_weights, batch, prompts=np.zeros((2, 3)))

    def test_zero_up_projection_adapters_are_identity(self, tiny_weights, tiny_model_config, batch, prompts):
        adapters = init_adapters(tiny_model_config, SeededRng(1), bottleneck=4)
        plain = forward(tiny_weights, batch, prompts=prompts).logits
        adapted = forward(tiny_weights, batch, prompts=prompts, adapters=adapters).logits
        assert np.max(np.abs(adapted - plain)) <= 1e-12

    def test_capture_leaves_logits_bitwise_equal(self, tiny_weights, batch, prompts):
        captured = forward(tiny_weights, batch, prompts=prompts, capture_positions=prompt_positions(3))
        assert np.array_equal(captured.logits, forward(tiny_weights, batch, prompts=prompts).logits)

    def test_ffn_neuron_permutation(self, tiny_weights, batch, prompts):
        """Permuting K rows, b1 and V rows together moves neurons without changing outputs."""
        perm = SeededRng(5).permutation(tiny_weights.config.d_m)
        k_mat, b1, v_mat, _ = tiny_weights.ffn(0)
        permuted = tiny_weights.with_tensors({"layers.0.ffn.k": k_mat[perm], "layers.0.ffn.b1": b1[perm], "layers.0.ffn.v": v_mat[perm]})
        base = forward(tiny_weights, batch, prompts=prompts, capture_positions=prompt_positions(3))
        moved = forward(permuted, batch, prompts=prompts, capture_positions=prompt_positions(3))
        assert np.allclose(moved.logits, base.logits, rtol=0.0, atol=1e-12)
        assert np.allclose(moved.trace.values[:, :, 0, :], base.trace.values[:, :, 0, perm], rtol=0.0, atol=1e-12)

    def test_all_zero_weights_give_uniform_logits(self, tiny_weights, batch, prompts):
        zero = tiny_weights.with_tensors({name: np.zeros_like(tiny_weights[name]) for name in tiny_weights.names})
        logits = forward(zero, batch, prompts=prompts).logits
        assert np.all(logits == logits[:, :1])
        assert np.allclose(softmax(logits), 1.0 / tiny_weights.config.vocab_size)

    def test_hand_set_ffn_activation(self, tiny_model_config):
        """With ln2 gain 0 every position feeds the FFN the ln2 bias, so activations are known in closed form."""
        config = dataclasses.replace(tiny_model_config, num_layers=1)
        d, d_m = config.d, config.d_m
        column = np.arange(d_m) % d
        c = np.linspace(-1.0, 1.0, d)
        k_mat = np.zeros((d_m, d))
        k_mat[np.arange(d_m), column] = 1.0
        b1 = np.linspace(-0.5, 0.5, d_m)
        hand = init_weights(config, SeededRng(3)).with_tensors(
            {"layers.0.ln2.gain": np.zeros(d), "layers.0.ln2.bias": c, "layers.0.ffn.k": k_mat, "layers.0.ffn.b1": b1}
        )
        out = forward(hand, np.array([[90, 91, 92]]), capture_positions=[0, 1, 2, 3])
        expected = gelu(c[column] + b1)
        for position in range(4):
            assert np.allclose(out.trace.values[0, position, 0], expected, rtol=0.0, atol=1e-12)


class TestBackward:
    """Analytic gradients against central finite differences."""

    def _loss(self, weights, ids, labels, verbalizer_task, prompts=None, adapters=None):
        out = forward(weights, ids, prompts=prompts, adapters=adapters)
        return verbalizer_loss(out.logits, verbalizer_task, labels)[0]

    def test_prompt_gradient(self, tiny_weights, batch, prompts, binary_task):
        task, _ = binary_task
        labels = np.array([0, 1, 1])
        out = forward(tiny_weights, batch, prompts=prompts, retain=True)
        _, dlogits = verbalizer_loss(out.logits, task, labels)
        grads = backward(out.tape, dlogits, TrainableSet.prompt())

        def objective(value):
            return self._loss(tiny_weights, batch, labels, task, prompts=value)

        directions = SeededRng(2).normal((20,) + prompts.shape)
        assert directional_check(objective, prompts, grads[PROMPT_TENSOR], directions, h=1e-5) < 1e-4

    def test_bias_gradient(self, tiny_weights, batch, binary_task):
        task, _ = binary_task
        labels = np.array([1, 0, 1])
        trainable = TrainableSet.biases(tiny_weights)
        out = forward(tiny_weights, batch, retain=True)
        _, dlogits = verbalizer_loss(out.logits, task, labels)
        grads = backward(out.tape, dlogits, trainable)
        assert set(grads) == set(trainable.names)

        name = "layers.1.ffn.b1"

        def objective(value):
            return self._loss(tiny_weights.with_tensors({name: value}), batch, labels, task)

        directions = SeededRng(6).normal((20,) + tiny_weights[name].shape)
        assert directional_check(objective, tiny_weights[name], grads[name], directions, h=1e-5) < 1e-4

    def test_adapter_gradient(self, tiny_weights, tiny_model_config, batch, binary_task):
        task, _ = binary_task
        labels = np.array([0, 0, 1])
        adapters = init_adapters(tiny_model_config, SeededRng(3), bottleneck=4)
        # nonzero up-projections so every adapter tensor receives signal
        adapters = adapters.with_tensors(
            {name: SeededRng(4).normal(value.shape, scale=0.05) for name, value in adapters.tensors.items() if name.endswith(".up")}
        )
        out = forward(tiny_weights, batch, adapters=adapters, retain=True)
        _, dlogits = verbalizer_loss(out.logits, task, labels)
        grads = backward(out.tape, dlogits, TrainableSet.adapters(adapters))

        name = "layers.0.adapter_ffn.down"

        def objective(value):
            return self._loss(tiny_weights, batch, labels, task, adapters=adapters.with_tensors({name: value}))

        directions = SeededRng(5).normal((20,) + adapters.tensors[name].shape)
        assert directional_check(objective, adapters.tensors[name], grads[name], directions, h=1e-5) < 1e-4

    def test_backward_requires_retained_forward(self, tiny_weights, batch):
        out = forward(tiny_weights, batch)
        with pytest.raises(ModelStateException):
            backward(out.tape, np.zeros_like(out.logits), TrainableSet.prompt())


class TestHooks:
    """Clamp and Gaussian-noise activation hooks."""

    def test_group_by_layer(self):
        groups = group_by_layer([NeuronId(1, 4), NeuronId(0, 2), NeuronId(1, 1), NeuronId(1, 4)], 2)
        assert groups[0].tolist() == [2]
        assert groups[1].tolist() == [1, 4]

    def test_clamp_hook_sets_values(self):
        hook = ClampHook({0: np.array([1, 3])}, {0: np.array([0.5, -1.0])})
        acts = np.zeros((2, 3, 4))
        out = hook(0, acts, np.ones((2, 3), dtype=bool))
        assert np.all(out[..., 1] == 0.5)
        assert np.all(out[..., 3] == -1.0)
        assert np.all(acts == 0.0)
        assert hook(1, acts, None) is acts

    def test_noise_hook_touches_only_selected(self):
        hook = GaussianNoiseHook({0: np.array([2])}, mu=0.0, sigma=1.0, rng=SeededRng(0))
        acts = np.zeros((1, 5, 4))
        out = hook(0, acts, None)
        assert np.all(out[..., [0, 1, 3]] == 0.0)
        assert np.any(out[..., 2] != 0.0)

    def test_zero_sigma_is_noop(self, tiny_weights, batch):
        hook = GaussianNoiseHook({0: np.arange(5)}, mu=0.0, sigma=0.0, rng=SeededRng(0))
        assert hook.is_noop
        assert np.array_equal(forward(tiny_weights, batch, hook=hook).logits, forward(tiny_weights, batch).logits)


class TestSerialization:
    """Weight and adapter files."""

    def test_weights_round_trip_within_float32(self, tiny_weights, tmp_path):
        path = tmp_path / "w.bin"
        save_weights(tiny_weights, path)
        loaded = load_weights(path)
        assert loaded.names == tiny_weights.names
        for name in tiny_weights.names:
            assert np.allclose(loaded[name], tiny_weights[name], atol=1e-7)

    def test_saving_is_byte_stable(self, tiny_weights, tmp_path):
        save_weights(tiny_weights, tmp_path / "a.bin")
        save_weights(load_weights(tmp_path / "a.bin"), tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_file_size_is_header_plus_float32_payload(self, tiny_weights, tmp_path):
        path = tmp_path / "w.bin"
        written = save_weights(tiny_weights, path)
        raw = path.read_bytes()
        _, _, header_len = struct.unpack_from("<4sII", raw)
        assert written == len(raw) == 12 + header_len + 4 * tiny_weights.parameter_count()

    def test_truncated_file(self, tiny_weights, tmp_path):
        path = tmp_path / "w.bin"
        save_weights(tiny_weights, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(TruncatedFileException):
            load_weights(path)

    def test_truncated_file_is_an_io_error(self, tiny_weights, tmp_path):
        path = tmp_path / "w.bin"
        path.write_bytes(b"SK")
        with pytest.raises(IOError):
            load_weights(path)

    def test_bad_magic(self, tiny_weights, tmp_path):
        path = tmp_path / "w.bin"
        save_weights(tiny_weights, path)
        path.write_bytes(b"XXXX" + path.read_bytes()[4:])
        with pytest.raises(FormatException):
            load_weights(path)

    def test_adapters_round_trip(self, tiny_model_config, tmp_path):
        adapters = init_adapters(tiny_model_config, SeededRng(1), bottleneck=4)
        save_adapters(adapters, tmp_path / "a.bin")
        loaded = load_adapters(tmp_path / "a.bin")
        assert loaded.bottleneck == 4
        assert sorted(loaded.names) == sorted(adapters.names)


class TestPretrain:
    """Masking and the MLM loop."""

    def test_mask_batch_selects_real_tokens(self):
        ids = pad_sequences([[90, 91, 92], [93]])
        corrupted, rows, cols, targets = mask_batch(ids, SeededRng(0), 0.15, 128)
        assert set(rows.tolist()) == {0, 1}
        assert np.all(ids[rows, cols] != PAD_ID)
        assert np.array_equal(targets, ids[rows, cols])
        assert corrupted.shape == ids.shape

    def test_initial_loss_is_near_uniform(self, tiny_weights, binary_task):
        _, dataset = binary_task
        config = PretrainConfig(steps=1, batch_size=8, log_interval=1)
        _, result = mlm_pretrain(tiny_weights, dataset.tokens("train"), SeededRng(0, 2), config)
        assert result.initial_loss == pytest.approx(np.log(tiny_weights.config.vocab_size), rel=0.1)

    def test_pretrain_is_deterministic_and_leaves_input(self, tiny_weights, binary_task):
        _, dataset = binary_task
        corpus = dataset.tokens("train")
        config = PretrainConfig(steps=3, batch_size=4, log_interval=1)
        first, result = mlm_pretrain(tiny_weights, corpus, SeededRng(0, 2), config)
        second, _ = mlm_pretrain(tiny_weights, corpus, SeededRng(0, 2), config)
        assert len(result.losses) == 3
        assert first.equals(second)
        assert not first.equals(tiny_weights)

    def test_pretrain_reduces_loss(self, tiny_weights, binary_task):
        _, dataset = binary_task
        config = PretrainConfig(steps=60, batch_size=16, learning_rate=0.003, log_interval=30)
        _, result = mlm_pretrain(tiny_weights, dataset.tokens("train"), SeededRng(1), config)
        assert np.mean(result.losses[-10:]) < np.mean(result.losses[:10])
