"""Tests for baselines, neuron predictivity, tables, ranking and the logistic probe."""

import numpy as np
import pytest

from skillprobe.config import FindConfig
from skillprobe.exception import ConfigException, ContractException, InputException
from skillprobe.model import NeuronId, forward, pad_sequences, prompt_positions
from skillprobe.numerics import SeededRng
from skillprobe.skillfind import (
    PredictivityTable,
    SkillNeuronSet,
    accuracy,
    aggregate,
    baseline_activation,
    build_tables,
    find_skill_neurons,
    interleave_rankings,
    load_tables,
    logistic_probe,
    predictivity,
    predictivity_histogram,
    rank_neurons,
    select_skill_neurons,
    subtask_probe,
)
from skillprobe.tuning import TrialSet, make_random_prompts


@pytest.fixture
def trial_set(tiny_weights, tiny_tune_config):
    groups = [make_random_prompts(tiny_tune_config, tiny_weights.config.d, 3, SeededRng(20, k)) for k in range(2)]
    return TrialSet(task="polarity_a", groups=groups, dev_accuracy=[0.5, 0.6], test_accuracy=[0.5, 0.5])


def _naive_pred(weights, group, dataset, trial_token, layer, index):
    """Per-sample loop: mean over train, then thresholded dev accuracy, folded."""

    def activation(sample):
        out = forward(weights, pad_sequences([sample.tokens]), prompts=group.values, capture_positions=prompt_positions(3))
        return out.trace.values[0, trial_token, layer, index]

    baseline = np.mean([activation(s) for s in dataset.train])
    hits = [(activation(s) > baseline) == bool(s.label) for s in dataset.dev]
    acc = float(np.mean(hits))
    return max(acc, 1.0 - acc)


class TestPrimitives:
    def test_baseline_is_mean_over_batches(self):
        batches = [np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0]])]
        assert baseline_activation(batches).tolist() == [3.0, 4.0]

    def test_accuracy_ties_predict_zero(self):
        acts = np.array([[1.0], [2.0], [3.0]])
        labels = np.array([0, 0, 1])
        assert accuracy([(acts, labels)], np.array([2.0]))[0] == 1.0

    def test_accuracy_needs_binary_labels(self):
        with pytest.raises(ContractException):
            accuracy([(np.zeros((2, 1)), np.array([0, 2]))], np.zeros(1))

    def test_empty_baseline(self):
        with pytest.raises(InputException):
            baseline_activation([])

    def test_predictivity_folds(self):
        assert predictivity(np.array([0.2, 0.7])).tolist() == pytest.approx([0.8, 0.7])
        assert predictivity(np.array([0.2, 0.7]), "positive").tolist() == pytest.approx([0.2, 0.7])
        with pytest.raises(ConfigException):
            predictivity(np.array([0.5]), "negative")

    def test_aggregate_modes(self):
        pred = np.array([[[0.6], [0.9]], [[0.7], [0.5]]])
        assert aggregate(pred, "max")[0] == pytest.approx(0.8)
        assert aggregate(pred, "mean")[0] == pytest.approx(0.675)


class TestTables:
    """Predictivity tables from the streaming finder."""

    def test_matches_per_sample_oracle(self, tiny_weights, binary_task, trial_set, tiny_find_config):
        task, dataset = binary_task
        tables = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config)
        table = tables["polarity_a"]
        assert table.pred.shape == (2, 3, 2, 32)
        assert table.train_count == len(dataset.train)
        for trial, token, layer, index in [(0, 0, 0, 3), (1, 2, 1, 17), (0, 1, 1, 30)]:
            expected = _naive_pred(tiny_weights, trial_set.groups[trial], dataset, token, layer, index)
            assert table.pred[trial, token, layer, index] == pytest.approx(expected)

    def test_label_flip_keeps_predictivity(self, tiny_weights, binary_task, trial_set, tiny_find_config):
        task, dataset = binary_task
        flipped = dataset.relabel(lambda label: 1 - label, num_classes=2)
        original = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config)["polarity_a"]
        mirrored = build_tables(tiny_weights, trial_set, task, flipped, tiny_find_config)["polarity_a"]
        assert np.allclose(original.pred, mirrored.pred)
        assert np.allclose(original.acc, 1.0 - mirrored.acc)

    def test_multiclass_targets(self, tiny_weights, three_way_task, trial_set, tiny_find_config):
        task, dataset = three_way_task
        tables = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config)
        assert list(tables) == ["c0_vs_c2", "c1_vs_rest"]
        assert tables["c0_vs_c2"].train_count == sum(1 for s in dataset.train if s.label != 1)

    def test_input_sources_run_without_prompts(self, tiny_weights, binary_task):
        task, dataset = binary_task
        for source in ("input_mean", "input_max"):
            tables = build_tables(tiny_weights, None, task, dataset, FindConfig(token_source=source, batch_size=32))
            assert tables["polarity_a"].pred.shape == (1, 1, 2, 32)

    def test_prompt_source_needs_trials(self, tiny_weights, binary_task):
        with pytest.raises(InputException):
            build_tables(tiny_weights, None, *binary_task)

    def test_workers_do_not_change_tables(self, tiny_weights, binary_task, trial_set, tiny_find_config):
        task, dataset = binary_task
        serial = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config, workers=1)["polarity_a"]
        parallel = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config, workers=2)["polarity_a"]
        assert np.array_equal(serial.pred, parallel.pred)

    def test_save_and_load(self, tiny_weights, binary_task, trial_set, tiny_find_config, tmp_path):
        task, dataset = binary_task
        table = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config)["polarity_a"]
        written = table.save(tmp_path)
        assert [p.name for p in written] == ["polarity_a.csv", "polarity_a_aggregate.csv", "polarity_a.npz"]
        header = (tmp_path / "polarity_a.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "layer,index,trial,token,a_bsl,acc,pred"
        loaded = load_tables(tmp_path)["polarity_a"]
        assert np.array_equal(loaded.pred, table.pred)
        assert loaded.trial_dev_accuracy == [0.5, 0.6]

    def test_histogram_fractions(self, tiny_weights, binary_task, trial_set, tiny_find_config):
        task, dataset = binary_task
        table = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config)["polarity_a"]
        histogram = predictivity_histogram(table, bins=5)
        assert histogram["per_trial"].shape == (2, 5)
        assert np.allclose(histogram["per_trial"].sum(axis=1), 1.0)
        assert histogram["edges"][0] == 0.5

    def test_clamp_values_modes(self):
        a_bsl = np.arange(2 * 3 * 1 * 2, dtype=float).reshape(2, 3, 1, 2)
        pred = np.zeros_like(a_bsl)
        pred[0, 2] = 1.0
        table = PredictivityTable("t", "t", a_bsl, pred, pred, pred, pred)
        assert table.clamp_values(0, "mean_tokens").tolist() == [[2.0, 3.0]]
        assert table.clamp_values(0, "best_token").tolist() == [[4.0, 5.0]]


class TestRanking:
    def test_rank_ties_by_layer_then_index(self):
        scores = np.array([[0.5, 0.9], [0.9, 0.6]])
        assert rank_neurons(scores) == [NeuronId(0, 1), NeuronId(1, 0), NeuronId(1, 1), NeuronId(0, 0)]

    def test_interleave_skips_duplicates(self):
        a = [NeuronId(0, 0), NeuronId(0, 1), NeuronId(0, 2)]
        b = [NeuronId(0, 0), NeuronId(1, 0), NeuronId(0, 1)]
        order, provenance = interleave_rankings([a, b], ["x", "y"])
        assert order == [NeuronId(0, 0), NeuronId(1, 0), NeuronId(0, 1), NeuronId(0, 2)]
        assert provenance == ["x", "y", "x", "x"]

    def test_top_fraction_rounds_up(self):
        ordering = rank_neurons(np.arange(10, dtype=float).reshape(2, 5))
        neurons = SkillNeuronSet(task="t", neurons=ordering[:2], ordering=ordering, scores=np.zeros((2, 5)))
        assert len(neurons.top_fraction(0.15)) == 2
        assert len(neurons.top_fraction(0.0)) == 0
        assert neurons.mask(1.0).all()

    def test_find_and_persist(self, tiny_weights, three_way_task, trial_set, tiny_find_config, tmp_path):
        task, dataset = three_way_task
        tables, neurons = find_skill_neurons(tiny_weights, trial_set, task, dataset, tiny_find_config)
        assert len(neurons.neurons) == tiny_find_config.top_k
        assert neurons.total == 64
        assert set(neurons.provenance) == set(tables)
        neurons.save(tmp_path / "skill_neurons.json")
        loaded = SkillNeuronSet.load(tmp_path / "skill_neurons.json")
        assert loaded.ordering == neurons.ordering
        assert loaded.provenance == neurons.provenance

    def test_multiclass_keeps_equal_share_per_subtask(self, tiny_weights, three_way_task, trial_set, tiny_find_config):
        """An odd top_k rounds up so every subtask contributes the same number of neurons."""
        task, dataset = three_way_task
        tables = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config)
        neurons = select_skill_neurons(task, tables, 7)
        assert len(tables) == 2
        assert len(neurons.neurons) == 8
        kept = neurons.provenance[: len(neurons.neurons)]
        assert sorted(kept.count(name) for name in tables) == [4, 4]
        assert len(set(neurons.neurons)) == 8

    def test_top_k_bounds(self, tiny_weights, binary_task, trial_set):
        with pytest.raises(ConfigException):
            find_skill_neurons(tiny_weights, trial_set, *binary_task, FindConfig(top_k=65))


class TestProbe:
    def test_separable_features(self):
        rng = SeededRng(0)
        labels = np.arange(90) % 3
        features = np.eye(3)[labels] * 3.0 + rng.normal((90, 3), scale=0.1)
        acc = logistic_probe(features[:60], labels[:60], features[60:], labels[60:], SeededRng(1), steps=200)
        assert acc == 1.0

    def test_single_class_training_split(self):
        with pytest.raises(ContractException):
            logistic_probe(np.zeros((4, 2)), np.zeros(4), np.zeros((2, 2)), np.zeros(2), SeededRng(0))

    def test_subtask_probe_reports_neurons(self, tiny_weights, three_way_task, trial_set, tiny_find_config):
        task, dataset = three_way_task
        tables = build_tables(tiny_weights, trial_set, task, dataset, tiny_find_config)
        result = subtask_probe(tiny_weights, trial_set, dataset, tables, tiny_find_config, seed=3)
        assert 0.0 <= result["accuracy"] <= 1.0
        assert [entry["target"] for entry in result["neurons"]] == ["c0_vs_c2", "c1_vs_rest"]
