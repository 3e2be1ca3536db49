"""Tests for synthetic tasks, decomposition and JSONL ingestion."""

import json

import numpy as np
import pytest

from skillprobe.config import FILLER_START, SYNTHETIC_MAX_LENGTH, UNK_ID, SyntheticTaskConfig
from skillprobe.exception import ConfigException, ContractException, ParseException, ValidationException
from skillprobe.numerics import SeededRng
from skillprobe.tasks import (
    all_cue_tokens,
    build_synthetic_task,
    cue_block,
    cue_counts,
    decompose,
    filler_tokens,
    gen_synthetic_task,
    load_jsonl,
    load_vocab,
    make_task_spec,
    split_counts,
)


class TestSplits:
    def test_split_counts(self):
        assert split_counts(120) == (72, 24, 24)
        assert split_counts(150) == (90, 30, 30)
        assert split_counts(7) == (4, 1, 2)

    def test_dataset_sizes(self, binary_task):
        _, dataset = binary_task
        assert dataset.sizes() == {"train": 72, "dev": 24, "test": 24}


class TestSyntheticTasks:
    """Cue structure, determinism and vocabulary layout."""

    def test_clean_label_is_dominant_cue_class(self, three_way_task):
        task, dataset = three_way_task
        for split in ("train", "dev", "test"):
            for sample in dataset.split(split):
                counts = cue_counts(sample.tokens, task.family, task.num_classes)
                assert int(np.argmax(counts)) == sample.label

    def test_lengths_and_vocab(self, binary_task):
        _, dataset = binary_task
        cues = set(all_cue_tokens().tolist())
        for sample in dataset.train:
            assert len(sample.tokens) <= SYNTHETIC_MAX_LENGTH
            assert all(token in cues or FILLER_START <= token < 128 for token in sample.tokens)

    def test_classes_are_balanced(self, three_way_task):
        _, dataset = three_way_task
        labels = np.concatenate([dataset.labels(split) for split in ("train", "dev", "test")])
        assert np.bincount(labels).tolist() == [50, 50, 50]

    def test_same_seed_same_task(self):
        config = SyntheticTaskConfig(name="t", family="topic", size=60, seed=21)
        assert build_synthetic_task(config, 128)[1] == build_synthetic_task(config, 128)[1]

    def test_noise_flips_some_labels(self):
        _, dataset = gen_synthetic_task("polarity", 2, 200, 128, SeededRng(5), noise=0.3)
        flipped = 0
        for sample in dataset.train:
            counts = cue_counts(sample.tokens, "polarity", 2)
            flipped += int(np.argmax(counts)) != sample.label
        assert 0 < flipped < len(dataset.train)

    def test_families_use_disjoint_cue_blocks(self):
        blocks = [set(cue_block(family).reshape(-1).tolist()) for family in ("polarity", "inference", "topic")]
        assert not blocks[0] & blocks[1]
        assert not blocks[1] & blocks[2]

    def test_variants_shift_filler(self):
        assert not np.array_equal(filler_tokens(128, 0), filler_tokens(128, 1))

    def test_rejects_small_size(self):
        with pytest.raises(ConfigException):
            gen_synthetic_task("polarity", 2, 10, 128, SeededRng(0))

    def test_rejects_small_vocab(self):
        with pytest.raises(ConfigException):
            filler_tokens(FILLER_START + 5, 0)

    def test_rejects_unknown_family(self):
        with pytest.raises(ConfigException):
            cue_block("sarcasm")


class TestDecompose:
    def test_three_way_subtasks(self, three_way_task):
        task, dataset = three_way_task
        parts = decompose(task, dataset)
        assert [subtask.name for subtask, _ in parts] == ["c0_vs_c2", "c1_vs_rest"]

        (_, pair), (_, rest) = parts
        original = {sample.uid: sample for split in ("train", "dev", "test") for sample in dataset.split(split)}
        assert sum(pair.sizes().values()) == 100
        assert sum(rest.sizes().values()) == 150
        for sample in pair.train:
            assert original[sample.uid].label in (0, 2)
            assert sample.label == (1 if original[sample.uid].label == 2 else 0)
            assert sample.tokens == original[sample.uid].tokens

    def test_binary_task_is_rejected(self, binary_task):
        with pytest.raises(ContractException):
            decompose(*binary_task)

    def test_verbalizer_must_be_injective(self):
        with pytest.raises(ConfigException):
            make_task_spec("dup", 2, "polarity", label_words=[3, 3])


class TestJsonl:
    """JSONL ingestion with a token-per-line vocabulary."""

    @pytest.fixture
    def vocab(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("[PAD]\n[MASK]\n[UNK]\ngood\nbad\nmovie\n", encoding="utf-8")
        return load_vocab(path)

    def _write(self, tmp_path, records):
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(json.dumps(r) if not isinstance(r, str) else r for r in records) + "\n", encoding="utf-8")
        return path

    def test_text_records_and_unknown_words(self, tmp_path, vocab):
        records = [{"text": "good movie", "label": 1}, {"text": "bad plot", "label": 0}] * 5
        dataset = load_jsonl(self._write(tmp_path, records), vocab)
        tokens = {sample.tokens for split in ("train", "dev", "test") for sample in dataset.split(split)}
        assert (3, 5) in tokens
        assert (4, UNK_ID) in tokens
        assert sum(dataset.sizes().values()) == 10

    def test_explicit_split_is_respected(self, tmp_path, vocab):
        records = [
            {"tokens": [3, 5], "label": 1, "split": "train"},
            {"tokens": [4], "label": 0, "split": "dev"},
            {"tokens": [4, 5], "label": 0, "split": "test"},
        ]
        dataset = load_jsonl(self._write(tmp_path, records), vocab)
        assert dataset.train[0].tokens == (3, 5)
        assert dataset.dev[0].label == 0

    def test_hash_assignment_is_stable(self, tmp_path, vocab):
        records = [{"tokens": [3, i % 3 + 3], "label": i % 2} for i in range(20)]
        path = self._write(tmp_path, records)
        assert load_jsonl(path, vocab) == load_jsonl(path, vocab)

    def test_invalid_json_reports_line(self, tmp_path, vocab):
        path = self._write(tmp_path, [{"tokens": [3], "label": 0}, "{not json"])
        with pytest.raises(ParseException) as exc_info:
            load_jsonl(path, vocab)
        assert exc_info.value.line_number == 2

    def test_label_must_be_integer(self, tmp_path, vocab):
        path = self._write(tmp_path, [{"tokens": [3], "label": "pos"}])
        with pytest.raises(ParseException):
            load_jsonl(path, vocab)

    def test_label_out_of_range(self, tmp_path, vocab):
        records = [{"tokens": [3], "label": 0, "split": s} for s in ("train", "dev")] + [{"tokens": [4], "label": 5, "split": "test"}]
        with pytest.raises(ValidationException):
            load_jsonl(self._write(tmp_path, records), vocab, num_classes=2)
