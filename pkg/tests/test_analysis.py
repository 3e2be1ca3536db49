"""Tests for perturbation curves, importance, rank correlation and word-level inspection."""

from itertools import permutations

import numpy as np
import pytest
from scipy.stats import spearmanr

from skillprobe.analysis import (
    ImportanceMatrix,
    PerturbationCurve,
    area_between,
    correlation_matrix,
    cosine_scores,
    draw_label_words,
    label_word_robustness,
    mean_pairwise,
    neuronal_importance,
    neurons_for_fraction,
    perturbation_curve,
    perturbed_evaluate,
    random_order,
    random_orderings,
    related_words,
    spearman,
    zscore_rows,
)
from skillprobe.config import FindConfig, PerturbationConfig
from skillprobe.exception import ConfigException, ContractException
from skillprobe.model import NeuronId
from skillprobe.numerics import SeededRng
from skillprobe.tasks import all_cue_tokens
from skillprobe.tuning import evaluate, make_random_prompts


class TestSpearman:
    def test_all_permutations_of_five(self):
        x = np.arange(5)
        for perm in permutations(range(5)):
            y = np.array(perm)
            d2 = float(np.sum((x - y) ** 2))
            assert spearman(x, y) == pytest.approx(1.0 - 6.0 * d2 / (5 * 24))

    def test_ties_use_average_ranks(self):
        x = np.array([1.0, 2.0, 2.0, 3.0, 5.0, 5.0])
        y = np.array([2.0, 1.0, 4.0, 4.0, 6.0, 3.0])
        assert spearman(x, y) == pytest.approx(spearmanr(x, y).correlation)

    def test_constant_vector(self):
        assert spearman(np.ones(4), np.arange(4)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ContractException):
            spearman(np.arange(3), np.arange(4))

    def test_correlation_matrix(self):
        rng = SeededRng(0)
        base = rng.normal((2, 16))
        scores = {"a": base, "b": base * 2.0 + 1.0, "c": -base}
        result = correlation_matrix(scores, pooled=True)
        assert result.per_layer.shape == (2, 3, 3)
        assert np.allclose(np.diag(result.overall), 1.0)
        assert np.allclose(result.overall, result.overall.T)
        assert result.overall[0, 1] == pytest.approx(1.0)
        assert result.overall[0, 2] == pytest.approx(-1.0)
        assert result.pooled[1, 2] == pytest.approx(-1.0)

    def test_mean_pairwise(self):
        x = np.arange(6, dtype=float)
        assert mean_pairwise([x, x, x[::-1]]) == pytest.approx((1.0 - 1.0 - 1.0) / 3)

    def test_shape_mismatch(self):
        with pytest.raises(ContractException):
            correlation_matrix({"a": np.zeros((2, 4)), "b": np.zeros((2, 5))})


class TestImportance:
    """Area between curves and row z-scoring."""

    def test_area_between(self):
        assert area_between([1.0, 0.5, 0.0], [1.0, 1.0, 1.0], [0.0, 0.5, 1.0]) == pytest.approx(0.5)

    def test_neuronal_importance_uses_trapezoid(self):
        source = PerturbationCurve("skill", [0.0, 0.2, 1.0], np.array([[0.9, 0.6, 0.5]]))
        random = PerturbationCurve("random", [0.0, 0.2, 1.0], np.array([[0.9, 0.8, 0.5]]))
        assert neuronal_importance(source, random) == pytest.approx(0.2 * 0.2 / 2 + 0.8 * 0.2 / 2)

    def test_grids_must_match(self):
        a = PerturbationCurve("a", [0.0, 1.0], np.zeros((1, 2)))
        b = PerturbationCurve("b", [0.0, 0.5], np.zeros((1, 2)))
        with pytest.raises(ContractException):
            neuronal_importance(a, b)

    def test_curve_statistics(self):
        curve = PerturbationCurve("x", [0.0, 1.0], np.array([[1.0, 0.0], [0.5, 0.0]]))
        assert curve.mean.tolist() == [0.75, 0.0]
        assert curve.sem[0] == pytest.approx(0.25 / np.sqrt(2))

    def test_zscore_rows(self):
        z, degenerate = zscore_rows(np.array([[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]))
        assert z[0].tolist() == pytest.approx([-np.sqrt(1.5), 0.0, np.sqrt(1.5)])
        assert z[1].tolist() == [0.0, 0.0, 0.0]
        assert degenerate.tolist() == [False, True]

    def test_importance_matrix_shape(self):
        with pytest.raises(ContractException):
            ImportanceMatrix(sources=["a", "b"], targets=["a"], raw=np.zeros((2, 2)))


class TestPerturbation:
    """Noise hooks driven through full evaluation."""

    @pytest.fixture
    def prompts(self, tiny_weights, tiny_tune_config):
        return make_random_prompts(tiny_tune_config, tiny_weights.config.d, 3, SeededRng(2))

    def test_neurons_for_fraction(self):
        ordering = random_order(2, 5, SeededRng(0))
        assert len(neurons_for_fraction(ordering, 0.0)) == 0
        assert len(neurons_for_fraction(ordering, 0.25)) == 3
        assert neurons_for_fraction(ordering, 1.0) == ordering

    def test_random_orderings_are_permutations(self):
        orderings = random_orderings(2, 8, seed=5, trials=3)
        assert len(orderings) == 3
        for ordering in orderings:
            assert sorted(ordering) == sorted(NeuronId(l, i) for l in range(2) for i in range(8))
        assert orderings[0] != orderings[1]

    def test_zero_fraction_matches_clean_accuracy(self, tiny_weights, binary_task, prompts, tiny_perturbation_config):
        task, dataset = binary_task
        ordering = random_order(2, 32, SeededRng(1))
        curve = perturbation_curve(tiny_weights, task, dataset, [ordering], tiny_perturbation_config, seed=4, prompts=[prompts])
        clean = evaluate(tiny_weights, task, dataset, split="test", prompts=prompts)
        assert curve.accuracies.shape == (2, 4)
        assert np.all(curve.accuracies[:, 0] == clean)

    def test_curve_is_reproducible_across_workers(self, tiny_weights, binary_task, prompts, tiny_perturbation_config):
        task, dataset = binary_task
        ordering = random_order(2, 32, SeededRng(1))
        serial = perturbation_curve(tiny_weights, task, dataset, [ordering], tiny_perturbation_config, 4, [prompts], workers=1)
        parallel = perturbation_curve(tiny_weights, task, dataset, [ordering], tiny_perturbation_config, 4, [prompts], workers=3)
        assert np.array_equal(serial.accuracies, parallel.accuracies)

    def test_zero_noise_is_flat(self, tiny_weights, binary_task, prompts):
        task, dataset = binary_task
        config = PerturbationConfig(sigma=0.0, fractions=[0.0, 0.5, 1.0], trials=1)
        curve = perturbation_curve(tiny_weights, task, dataset, [random_order(2, 32, SeededRng(0))], config, 1, [prompts])
        assert np.all(curve.accuracies == curve.accuracies[0, 0])

    def test_perturbed_evaluate_validates_neurons(self, tiny_weights, binary_task, tiny_perturbation_config):
        task, dataset = binary_task
        with pytest.raises(ConfigException):
            perturbed_evaluate(tiny_weights, task, dataset, [NeuronId(5, 0)], tiny_perturbation_config, SeededRng(0))

    def test_fraction_grid_validation(self, tiny_weights, binary_task):
        with pytest.raises(ConfigException):
            perturbation_curve(tiny_weights, *binary_task, [[]], PerturbationConfig(fractions=[0.1, 0.5]), 0)


class TestWords:
    def test_cosine_range(self, tiny_weights):
        scores = cosine_scores(tiny_weights, NeuronId(0, 3))
        assert scores.shape == (128,)
        assert np.all(np.abs(scores) <= 1.0 + 1e-12)

    def test_related_words(self, tiny_weights, binary_task):
        _, dataset = binary_task
        result = related_words(tiny_weights, NeuronId(1, 5), dataset.train, k=4)
        assert result["neuron"] == [1, 5]
        assert len(result["cosine_top"]) == 4
        seen = {token for sample in dataset.train for token in sample.tokens}
        assert all(token in seen for token, _ in result["activation_top"] + result["activation_bottom"])
        tops = [score for _, score in result["cosine_top"]]
        assert tops == sorted(tops, reverse=True)

    def test_related_words_k_bounds(self, tiny_weights, binary_task):
        with pytest.raises(ConfigException):
            related_words(tiny_weights, NeuronId(0, 0), binary_task[1].train, k=0)

    def test_draw_label_words(self, binary_task):
        task, _ = binary_task
        words = draw_label_words(task, 128, SeededRng(0), avoid=task.verbalizer)
        assert len(set(words)) == 2
        assert not set(words) & set(all_cue_tokens().tolist())
        assert not set(words) & set(task.verbalizer)
        assert all(3 <= word < 128 for word in words)

    def test_label_word_robustness(self, tiny_weights, binary_task, tiny_tune_config):
        task, dataset = binary_task
        tiny_tune_config.max_steps = 5
        tiny_tune_config.eval_interval = 5
        tiny_tune_config.trials = 1
        result = label_word_robustness(
            tiny_weights, task, dataset, tiny_tune_config, FindConfig(top_k=4, batch_size=32), seed=3, label_word_sets=[(3, 4), (100, 101)]
        )
        assert result.label_word_sets == [(3, 4), (100, 101)]
        assert len(result.scores) == 2
        assert -1.0 <= result.mean_rho <= 1.0

    def test_robustness_needs_two_sets(self, tiny_weights, binary_task, tiny_tune_config):
        with pytest.raises(ConfigException):
            label_word_robustness(tiny_weights, *binary_task, tiny_tune_config, FindConfig(), 0, label_word_sets=[(3, 4)])
