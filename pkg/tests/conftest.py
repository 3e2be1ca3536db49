"""
Pytest configuration and fixtures for skillprobe tests
"""

import os
from pathlib import Path

import pytest

# Keep test runs from writing rotating log files into the project tree.
os.environ.setdefault("SKILLPROBE_LOG_TO_FILE", "0")
os.environ.setdefault("SKILLPROBE_LOG_COLOR", "0")

from skillprobe.config import (  # noqa: E402
    ExperimentConfig,
    FindConfig,
    ModelConfig,
    PerturbationConfig,
    PretrainConfig,
    PruneConfig,
    SyntheticTaskConfig,
    TuneConfig,
    WordsConfig,
)
from skillprobe.model.weights import init_weights  # noqa: E402
from skillprobe.numerics.rng import SeededRng  # noqa: E402
from skillprobe.tasks.synthetic import build_synthetic_task  # noqa: E402


@pytest.fixture
def test_configs_dir():
    """Path to test config fixtures"""
    return Path(__file__).parent / "fixtures" / "configs"


@pytest.fixture
def sample_config_path(test_configs_dir):
    """Path to the tiny end-to-end config"""
    return test_configs_dir / "tiny-suite.yaml"


@pytest.fixture
def tiny_model_config():
    """Two-layer encoder small enough for finite differences"""
    return ModelConfig(num_layers=2, d=16, d_m=32, num_heads=2, vocab_size=128, max_positions=64)


@pytest.fixture
def tiny_weights(tiny_model_config):
    return init_weights(tiny_model_config, SeededRng(0, 0))


@pytest.fixture
def tiny_tune_config():
    return TuneConfig(learning_rate=0.01, batch_size=8, eval_interval=10, patience=2, max_steps=40, num_prompts=4, trials=2)


@pytest.fixture
def tiny_find_config():
    return FindConfig(top_k=8, histogram_bins=5, probe_steps=50, batch_size=32)


@pytest.fixture
def tiny_perturbation_config():
    return PerturbationConfig(sigma=0.5, fractions=[0.0, 0.1, 0.5, 1.0], trials=2)


@pytest.fixture
def binary_task():
    """Separable polarity task with low label noise"""
    return build_synthetic_task(SyntheticTaskConfig(name="polarity_a", family="polarity", size=120, noise=0.0, seed=3), 128)


@pytest.fixture
def three_way_task():
    return build_synthetic_task(
        SyntheticTaskConfig(name="polarity_3way", family="polarity", num_classes=3, size=150, noise=0.0, variant=2, seed=4), 128
    )


@pytest.fixture
def tiny_experiment_config(tmp_path, tiny_model_config, tiny_tune_config, tiny_find_config, tiny_perturbation_config):
    """Complete 4-task experiment that runs end to end in seconds"""
    return ExperimentConfig(
        config_name="tiny",
        seed=7,
        output_dir=str(tmp_path / "experiment"),
        model=tiny_model_config,
        pretrain=PretrainConfig(steps=20, batch_size=8, log_interval=10),
        tune=tiny_tune_config,
        tasks=[
            SyntheticTaskConfig(name="polarity_a", family="polarity", size=80, variant=0, seed=11),
            SyntheticTaskConfig(name="polarity_b", family="polarity", size=80, variant=1, seed=12),
            SyntheticTaskConfig(name="inference", family="inference", size=80, variant=0, seed=13),
            SyntheticTaskConfig(name="polarity_3way", family="polarity", num_classes=3, size=90, variant=2, seed=14),
        ],
        find=tiny_find_config,
        perturbation=tiny_perturbation_config,
        words=WordsConfig(k=3, neurons=2, label_word_draws=2, robustness_trials=1),
        prune=PruneConfig(keep_fraction=0.25, layer_fraction=0.5, bench_batch=2, bench_repetitions=30, bench_warmup=1),
    )
