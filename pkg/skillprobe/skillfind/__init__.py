"""Baseline activations, neuron accuracy, predictivity, ranking and the logistic probe."""

from skillprobe.skillfind.finder import (
    TOKEN_SOURCES,
    SkillNeuronSet,
    activation_batches,
    build_tables,
    find_skill_neurons,
    interleave_rankings,
    rank_neurons,
    select_skill_neurons,
)
from skillprobe.skillfind.predictivity import (
    AccuracyCounter,
    RunningMean,
    accuracy,
    aggregate,
    baseline_activation,
    predictivity,
)
from skillprobe.skillfind.probe import logistic_probe, neuron_features, subtask_probe
from skillprobe.skillfind.table import PredictivityTable, load_tables, predictivity_histogram

__all__ = [
    "TOKEN_SOURCES",
    "AccuracyCounter",
    "PredictivityTable",
    "RunningMean",
    "SkillNeuronSet",
    "accuracy",
    "activation_batches",
    "aggregate",
    "baseline_activation",
    "build_tables",
    "find_skill_neurons",
    "interleave_rankings",
    "load_tables",
    "logistic_probe",
    "neuron_features",
    "predictivity",
    "predictivity_histogram",
    "rank_neurons",
    "select_skill_neurons",
    "subtask_probe",
]
