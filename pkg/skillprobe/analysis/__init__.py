"""Perturbation curves, neuronal importance, rank correlations and word-level inspection."""

from skillprobe.analysis.correlation import CorrelationResult, correlation_matrix, mean_pairwise, spearman
from skillprobe.analysis.perturbation import (
    ImportanceMatrix,
    PerturbationCurve,
    area_between,
    neuronal_importance,
    neurons_for_fraction,
    perturbation_curve,
    perturbed_evaluate,
    random_order,
    random_orderings,
    zscore_rows,
)
from skillprobe.analysis.words import (
    RobustnessResult,
    cosine_scores,
    draw_label_words,
    label_word_robustness,
    related_words,
    token_activation_means,
)

__all__ = [
    "CorrelationResult",
    "ImportanceMatrix",
    "PerturbationCurve",
    "RobustnessResult",
    "area_between",
    "correlation_matrix",
    "cosine_scores",
    "draw_label_words",
    "label_word_robustness",
    "mean_pairwise",
    "neuronal_importance",
    "neurons_for_fraction",
    "perturbation_curve",
    "perturbed_evaluate",
    "random_order",
    "random_orderings",
    "related_words",
    "spearman",
    "token_activation_means",
    "zscore_rows",
]
