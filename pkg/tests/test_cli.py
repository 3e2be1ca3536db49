"""
Test the command line: exit codes, config handling and a tiny end-to-end run
"""

import json

import pytest
import yaml

from skillprobe.pipeline import Manifest
from src.app.main import EXIT_DEPENDENCY, EXIT_OK, main


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    """The tiny suite run twice, serially and with two workers, skipping the timing stage"""
    from pathlib import Path

    config = Path(__file__).parent / "fixtures" / "configs" / "tiny-suite.yaml"
    first = tmp_path_factory.mktemp("serial")
    second = tmp_path_factory.mktemp("parallel")
    codes = [
        main(["run", "--config", str(config), "--out", str(first), "--threads", "1", "--skip", "bench"]),
        main(["run", "--config", str(config), "--out", str(second), "--threads", "2", "--skip", "bench"]),
    ]
    return codes, first, second


def test_sample_config_round_trip(tmp_path):
    """Test that the generated sample config validates"""
    output = tmp_path / "sample.yaml"
    assert main(["sample-config", "--output", str(output)]) == EXIT_OK
    data = yaml.safe_load(output.read_text(encoding="utf-8"))
    assert data["config_name"] == "sample_config"
    assert main(["validate", "--config", str(output)]) == EXIT_OK


def test_validate_rejects_bad_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("prune:\n  bench_repetitions: 3\n", encoding="utf-8")
    assert main(["validate", "--config", str(bad)]) == EXIT_DEPENDENCY


def test_missing_config_file(tmp_path):
    assert main(["pretrain", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "exp")]) == EXIT_DEPENDENCY


def test_stage_before_upstream(sample_config_path, tmp_path):
    """A stage whose inputs are missing exits with code 2 and writes no stage record"""
    out = tmp_path / "exp"
    assert main(["find", "--config", str(sample_config_path), "--out", str(out)]) == EXIT_DEPENDENCY
    assert "find" not in Manifest.load(out).stages


def test_long_jsonl_record_exits_before_compute(sample_config_path, tmp_path):
    """A JSONL record longer than the position budget fails at load with exit code 2"""
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("[PAD]\n[MASK]\n[UNK]\ngood\nbad\n", encoding="utf-8")
    records = [{"tokens": [3] * 60, "label": 1, "split": "train"}, {"tokens": [4], "label": 0, "split": "dev"}, {"tokens": [4], "label": 0, "split": "test"}]
    data = tmp_path / "ext.jsonl"
    data.write_text("".join(json.dumps(record) + "\n" for record in records), encoding="utf-8")
    config = yaml.safe_load(sample_config_path.read_text(encoding="utf-8"))
    config["jsonl_tasks"] = [{"name": "ext", "path": str(data), "vocab_path": str(vocab)}]
    path = tmp_path / "long.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")

    out = tmp_path / "exp"
    assert main(["pretrain", "--config", str(path), "--out", str(out)]) == EXIT_DEPENDENCY
    assert "pretrain" not in Manifest.load(out).stages
    assert not (out / "model" / "pretrained.bin").exists()

def test_run_completes(tiny_runs):
    codes, first, _ = tiny_runs
    assert codes == [EXIT_OK, EXIT_OK]
    report = json.loads((first / "report" / "summary.json").read_text(encoding="utf-8"))
    for section in ("accuracy", "perturbation", "specificity", "origin", "prune", "words", "transfer"):
        assert section in report
    assert report["tasks"] == ["polarity_a", "polarity_b", "inference", "polarity_3way"]
    origin = {row["task"]: row for row in report["origin"]}
    assert origin["polarity_3way"]["random_guess"] == pytest.approx(1 / 3)
    assert {"random_prompt_std", "hard_prompt_std", "random_model_std"} <= set(origin["polarity_a"])
    trials = yaml.safe_load((first / "config.yaml").read_text(encoding="utf-8"))["tune"]["trials"]
    assert len(list((first / "tune" / "polarity_a" / "baselines" / "random").glob("trial_*/prompts.bin"))) == trials


def test_run_lists_every_file(tiny_runs):
    _, first, _ = tiny_runs
    manifest = Manifest.load(first)
    assert manifest.unlisted() == []
    assert manifest.missing() == []
    assert manifest.config_matches()
    assert "bench" not in manifest.stages


def test_report_is_reproducible(tiny_runs):
    """Worker count does not change any reported number"""
    _, first, second = tiny_runs
    serial = (first / "report" / "summary.json").read_bytes()
    parallel = (second / "report" / "summary.json").read_bytes()
    assert serial == parallel
    assert (first / "config.yaml").read_bytes() == (second / "config.yaml").read_bytes()


def test_bench_after_run(tiny_runs):
    _, first, _ = tiny_runs
    config = first / "config.yaml"
    assert main(["bench", "--config", str(config), "--out", str(first)]) == EXIT_OK
    timing = json.loads((first / "bench" / "timing.json").read_text(encoding="utf-8"))
    assert timing
    for entry in timing.values():
        assert entry["repetitions"] == 30
    assert Manifest.load(first).unlisted() == []
