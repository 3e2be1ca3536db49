"""Tests for the shared training loop, the three tuning regimes and prompt files."""

import numpy as np
import pytest

from skillprobe.exception import FormatException, VocabException
from skillprobe.model import init_adapters
from skillprobe.model.weights import is_bias
from skillprobe.numerics import SeededRng, cross_entropy
from skillprobe.tuning import (
    PromptGroup,
    TrialSet,
    accuracy_from_logits,
    adapter_tune,
    bitfit_tune,
    evaluate,
    make_hard_prompt,
    make_random_prompts,
    prompt_tune,
    run_trials,
    train_loop,
    verbalizer_loss,
)


def _scripted_score(values):
    scores = iter(values)
    return lambda params: next(scores)


def _constant_grads(params, ids, labels):
    return 0.0, {name: np.ones_like(value) for name, value in params.items()}


class TestVerbalizerLoss:
    def test_gradient_lives_on_label_words(self, binary_task):
        task, _ = binary_task
        logits = SeededRng(0).normal((4, 128))
        labels = np.array([0, 1, 1, 0])
        loss, dlogits = verbalizer_loss(logits, task, labels)
        expected, _ = cross_entropy(logits[:, list(task.verbalizer)], labels)
        assert loss == pytest.approx(expected)
        outside = np.delete(dlogits, list(task.verbalizer), axis=1)
        assert np.all(outside == 0.0)

    def test_accuracy_ties_go_to_lowest_label(self):
        assert accuracy_from_logits(np.array([[1.0, 1.0], [0.0, 2.0]]), np.array([0, 1])) == 1.0


class TestTrainLoop:
    """Evaluation schedule, early stopping and best-snapshot selection."""

    def test_early_stop_keeps_best_snapshot(self, binary_task, tiny_tune_config):
        task, dataset = binary_task
        tiny_tune_config.eval_interval = 1
        tiny_tune_config.patience = 2
        params = {"w": np.zeros(2)}
        best, result = train_loop(
            "prompt", task, dataset, params, _constant_grads, _scripted_score([0.5, 0.6, 0.55, 0.5]), tiny_tune_config, SeededRng(0), 0.1
        )
        assert result.curve == [(0, 0.5), (1, 0.6), (2, 0.55), (3, 0.5)]
        assert result.best_step == 1
        assert result.best_accuracy == 0.6
        assert result.early_stopped
        assert result.steps_run == 3
        assert not result.stalled
        assert np.allclose(best["w"], -0.1, atol=1e-6)

    def test_stalled_run_returns_initial_params(self, binary_task, tiny_tune_config):
        task, dataset = binary_task
        tiny_tune_config.eval_interval = 10
        tiny_tune_config.max_steps = 20
        tiny_tune_config.patience = 5
        params = {"w": np.array([0.25])}
        best, result = train_loop(
            "bitfit", task, dataset, params, _constant_grads, lambda p: 0.5, tiny_tune_config, SeededRng(0), 0.1
        )
        assert result.stalled
        assert result.best_step == 0
        assert [step for step, _ in result.curve] == [0, 10, 20]
        assert best["w"].tolist() == [0.25]

    def test_final_step_is_always_evaluated(self, binary_task, tiny_tune_config):
        task, dataset = binary_task
        tiny_tune_config.eval_interval = 15
        tiny_tune_config.max_steps = 20
        _, result = train_loop(
            "adapter", task, dataset, {"w": np.zeros(1)}, _constant_grads, lambda p: 0.5, tiny_tune_config, SeededRng(0), 0.1
        )
        assert [step for step, _ in result.curve] == [0, 15, 20]


class TestRegimes:
    """Prompt tuning, BitFit and adapters on the untrained tiny model."""

    def test_prompt_tune_is_deterministic(self, tiny_weights, binary_task, tiny_tune_config):
        task, dataset = binary_task
        snapshot = tiny_weights.copy()
        first, result = prompt_tune(tiny_weights, task, dataset, tiny_tune_config, SeededRng(1, 0))
        second, _ = prompt_tune(tiny_weights, task, dataset, tiny_tune_config, SeededRng(1, 0))
        assert first.values.shape == (tiny_tune_config.num_prompts, tiny_weights.config.d)
        assert np.array_equal(first.values, second.values)
        assert result.curve[0][0] == 0
        assert result.best_accuracy == max(acc for _, acc in result.curve)
        assert tiny_weights.equals(snapshot)

    def test_prompt_tune_from_init(self, tiny_weights, binary_task, tiny_tune_config):
        task, dataset = binary_task
        init = make_random_prompts(tiny_tune_config, tiny_weights.config.d, tiny_tune_config.num_prompts, SeededRng(9))
        tiny_tune_config.max_steps = 5
        tiny_tune_config.eval_interval = 5
        group, result = prompt_tune(tiny_weights, task, dataset, tiny_tune_config, SeededRng(2), init=init)
        assert result.curve[0][1] == pytest.approx(evaluate(tiny_weights, task, dataset, prompts=init))
        assert group.provenance == "tuned"

    def test_bitfit_changes_only_biases(self, tiny_weights, binary_task, tiny_tune_config):
        task, dataset = binary_task
        tiny_tune_config.max_steps = 10
        tiny_tune_config.eval_interval = 5
        tiny_tune_config.regime_learning_rate = 0.05
        tuned, _ = bitfit_tune(tiny_weights, task, dataset, tiny_tune_config, SeededRng(3))
        assert tuned.kind == "bitfit"
        for name in tiny_weights.names:
            if not is_bias(name):
                assert np.array_equal(tuned[name], tiny_weights[name])

    def test_adapter_tune_leaves_backbone(self, tiny_weights, tiny_model_config, binary_task, tiny_tune_config):
        task, dataset = binary_task
        tiny_tune_config.max_steps = 10
        tiny_tune_config.eval_interval = 5
        snapshot = tiny_weights.copy()
        adapters = init_adapters(tiny_model_config, SeededRng(4), bottleneck=4)
        tuned, result = adapter_tune(tiny_weights, adapters, task, dataset, tiny_tune_config, SeededRng(5))
        assert sorted(tuned.names) == sorted(adapters.names)
        assert result.regime == "adapter"
        assert tiny_weights.equals(snapshot)

    def test_run_trials_independent_of_workers(self, tiny_weights, binary_task, tiny_tune_config):
        task, dataset = binary_task
        tiny_tune_config.max_steps = 10
        tiny_tune_config.eval_interval = 5
        serial, _ = run_trials(tiny_weights, task, dataset, tiny_tune_config, seed=11, workers=1)
        parallel, results = run_trials(tiny_weights, task, dataset, tiny_tune_config, seed=11, workers=2)
        assert len(serial) == len(parallel) == tiny_tune_config.trials
        for a, b in zip(serial.groups, parallel.groups):
            assert np.array_equal(a.values, b.values)
        assert serial.dev_accuracy == parallel.dev_accuracy
        assert parallel.best_trial == int(np.argmax([r.best_accuracy for r in results]))
        assert not np.array_equal(serial.groups[0].values, serial.groups[1].values)


class TestPromptFiles:
    def test_prompt_group_round_trip(self, tmp_path):
        group = PromptGroup(values=SeededRng(0).normal((4, 16)), provenance="random", seed=3)
        group.save(tmp_path / "p.bin")
        loaded = PromptGroup.load(tmp_path / "p.bin")
        assert loaded.provenance == "random"
        assert loaded.seed == 3
        assert np.allclose(loaded.values, group.values, atol=1e-6)

    def test_trial_set_round_trip(self, tmp_path):
        groups = [PromptGroup(values=SeededRng(k).normal((2, 8))) for k in range(3)]
        trial_set = TrialSet(task="t", groups=groups, dev_accuracy=[0.5, 0.75, 0.75], test_accuracy=[0.4, 0.7, 0.6])
        trial_set.save(tmp_path)
        loaded = TrialSet.load(tmp_path)
        assert len(loaded) == 3
        assert loaded.best_trial == 1
        assert loaded.test_accuracy == [0.4, 0.7, 0.6]

    def test_unknown_provenance(self):
        with pytest.raises(FormatException):
            PromptGroup(values=np.zeros((2, 2)), provenance="learned")

    def test_hard_prompt_copies_embedding_rows(self, tiny_weights):
        table = tiny_weights["embed.tokens"]
        group = make_hard_prompt([16, 17, 16], table)
        assert np.array_equal(group.values[0], table[16])
        assert group.hard_tokens == (16, 17, 16)
        group.values[0, 0] += 1.0
        assert table[16, 0] != group.values[0, 0]

    def test_hard_prompt_vocab_check(self, tiny_weights):
        with pytest.raises(VocabException):
            make_hard_prompt([500], tiny_weights["embed.tokens"])
