"""Analysis stages: perturbation and neuronal importance, rank correlation, word-level inspection."""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from skillprobe.analysis.correlation import correlation_matrix
from skillprobe.analysis.perturbation import ImportanceMatrix, PerturbationCurve, neuronal_importance, perturbation_curve, random_orderings
from skillprobe.analysis.words import label_word_robustness, related_words
from skillprobe.model.weights import ModelWeights
from skillprobe.numerics.rng import derive_seed
from skillprobe.pipeline.stages import PURPOSE_PERTURB, PURPOSE_WORDS
from skillprobe.pipeline.workspace import Experiment
from skillprobe.skillfind.finder import SkillNeuronSet
from skillprobe.tuning.prompts import PromptGroup

REGIMES = ("prompt", "bitfit", "adapter")
CURVE_FIELDS = ["regime", "order", "fraction", "mean", "std", "sem"]


def _regime_model(experiment: Experiment, regime: str, name: str, weights: ModelWeights):
    """(weights, per-trial prompts, adapters) a regime evaluates ``name`` with."""
    if regime == "prompt":
        return weights, list(experiment.trial_set(name).groups), None
    if regime == "bitfit":
        return experiment.bitfit_model(name), [], None
    return weights, [], experiment.adapters(name)


def _importance_for_regime(
    experiment: Experiment,
    out,
    bundle,
    regime: str,
    weights: ModelWeights,
    neuron_sets: Dict[str, SkillNeuronSet],
) -> Tuple[ImportanceMatrix, Dict[str, List[Dict[str, Any]]]]:
    config = experiment.config
    names = experiment.task_names()
    pcfg = config.perturbation
    model_cfg = weights.config
    random_orders = random_orderings(model_cfg.num_layers, model_cfg.d_m, derive_seed(config.seed, PURPOSE_PERTURB), pcfg.trials)
    raw = np.zeros((len(names), len(names)))
    by_target: Dict[str, List[Dict[str, Any]]] = {}

    for i, target in enumerate(names):
        task, dataset = experiment.tasks()[target]
        model, prompts, adapters = _regime_model(experiment, regime, target, weights)
        seed = experiment.task_seed(target, PURPOSE_PERTURB)

        def curve(orderings, order_name: str) -> PerturbationCurve:
            return perturbation_curve(model, task, dataset, orderings, pcfg, seed, prompts, adapters, order_name, experiment.workers)

        random_curve = curve(random_orders, "random")
        curves = [random_curve]
        for j, source in enumerate(names):
            source_curve = curve([neuron_sets[source].ordering], source)
            raw[i, j] = neuronal_importance(source_curve, random_curve)
            curves.append(source_curve)
        by_target[target] = [c.to_dict() for c in curves]

        out.csv(
            f"perturb/{regime}/{target}_curves.csv",
            CURVE_FIELDS,
            ({"regime": regime, "order": c.order, **row} for c in curves for row in c.rows()),
        )
        for c in curves:
            bundle.add_series(
                f"{regime}_{target}_{c.order}",
                {"fraction": c.fractions, "mean": c.mean, "std": c.std, "sem": c.sem},
                meta={"regime": regime, "task": target, "order": c.order},
            )

    matrix = ImportanceMatrix(sources=names, targets=names, raw=raw)
    out.json(f"perturb/{regime}/importance.json", matrix.to_dict())
    out.csv(
        f"perturb/{regime}/importance.csv",
        ["target", "source", "raw", "zscore"],
        (
            {"target": t, "source": s, "raw": float(matrix.raw[i, j]), "zscore": float(matrix.zscored[i, j])}
            for i, t in enumerate(names)
            for j, s in enumerate(names)
        ),
    )
    bundle.add_matrix(f"{regime}_importance_z", names, matrix.zscored, meta={"regime": regime, "rows": "target", "cols": "source"})
    return matrix, by_target


def _regime_contrast(
    experiment: Experiment,
    regime: str,
    weights: ModelWeights,
    neuron_sets: Dict[str, SkillNeuronSet],
) -> List[Dict[str, Any]]:
    """Accuracy with the top regime_fraction own-task skill neurons perturbed vs the same share of random neurons."""
    config = experiment.config
    fraction = config.perturbation.regime_fraction
    pcfg = replace(config.perturbation, fractions=[0.0, fraction])
    model_cfg = weights.config
    random_orders = random_orderings(model_cfg.num_layers, model_cfg.d_m, derive_seed(config.seed, PURPOSE_PERTURB), pcfg.trials)
    rows = []
    for name, (task, dataset) in experiment.tasks().items():
        model, prompts, adapters = _regime_model(experiment, regime, name, weights)
        seed = experiment.task_seed(name, PURPOSE_PERTURB)
        skill = perturbation_curve(model, task, dataset, [neuron_sets[name].ordering], pcfg, seed, prompts, adapters, name, experiment.workers)
        rand = perturbation_curve(model, task, dataset, random_orders, pcfg, seed, prompts, adapters, "random", experiment.workers)
        rows.append(
            {
                "regime": regime,
                "task": name,
                "fraction": float(fraction),
                "unperturbed": float(skill.mean[0]),
                "skill_perturbed": float(skill.mean[1]),
                "random_perturbed": float(rand.mean[1]),
                "skill_minus_random": float(skill.mean[1] - rand.mean[1]),
            }
        )
    return rows


def run_perturb(experiment: Experiment, regimes: Sequence[str] = REGIMES) -> Dict[str, Any]:
    weights = experiment.pretrained()
    neuron_sets = {name: experiment.neuron_set(name) for name in experiment.task_names()}
    summary: Dict[str, Any] = {"curves": {}, "importance": {}, "contrast": []}
    with experiment.stage("perturb") as out:
        bundle = out.bundle("plots/perturb")
        for regime in regimes:
            experiment.logger.info("perturbation regime=%s over %s tasks", regime, len(neuron_sets))
            matrix, curves = _importance_for_regime(experiment, out, bundle, regime, weights, neuron_sets)
            summary["curves"][regime] = curves
            summary["importance"][regime] = matrix.to_dict()
            summary["contrast"].extend(_regime_contrast(experiment, regime, weights, neuron_sets))
        out.csv("perturb/contrast.csv", list(summary["contrast"][0]), summary["contrast"])
        out.json("perturb/summary.json", summary)
        out.close_bundle(bundle)
    return summary


# -----------------------------------------------------------------------------
# Correlation
# -----------------------------------------------------------------------------


def family_contrast(tasks: Sequence[str], families: Dict[str, str], matrix: np.ndarray) -> Dict[str, Optional[float]]:
    """Mean off-diagonal correlation within families and across them."""
    same, cross = [], []
    for i, a in enumerate(tasks):
        for j in range(i + 1, len(tasks)):
            (same if families[a] == families[tasks[j]] else cross).append(float(matrix[i, j]))
    return {
        "same_family": float(np.mean(same)) if same else None,
        "cross_family": float(np.mean(cross)) if cross else None,
    }


def run_correlate(experiment: Experiment) -> Dict[str, Any]:
    names = experiment.task_names()
    scores = {name: experiment.neuron_set(name).scores for name in names}
    families = {name: experiment.tasks()[name][0].family for name in names}
    with experiment.stage("correlate") as out:
        result = correlation_matrix(scores, pooled=True)
        bundle = out.bundle("plots/correlate")
        out.csv(
            "correlate/overall.csv",
            ["row", "col", "rho"],
            ({"row": a, "col": b, "rho": float(result.overall[i, j])} for i, a in enumerate(names) for j, b in enumerate(names)),
        )
        out.csv(
            "correlate/per_layer.csv",
            ["layer", "row", "col", "rho"],
            (
                {"layer": layer, "row": a, "col": b, "rho": float(result.per_layer[layer, i, j])}
                for layer in range(result.per_layer.shape[0])
                for i, a in enumerate(names)
                for j, b in enumerate(names)
            ),
        )
        bundle.add_matrix("overall", names, result.overall)
        for layer in range(result.per_layer.shape[0]):
            bundle.add_matrix(f"layer_{layer}", names, result.per_layer[layer], meta={"layer": layer})
        summary = result.to_dict()
        summary["families"] = families
        summary["family_contrast"] = family_contrast(names, families, result.overall)
        out.json("correlate/correlation.json", summary)
        out.close_bundle(bundle)
    return summary


# -----------------------------------------------------------------------------
# Words
# -----------------------------------------------------------------------------


def _robustness_task(experiment: Experiment) -> str:
    configured = experiment.config.words.robustness_task
    if configured:
        return configured
    binary = [name for name, (task, _) in experiment.tasks().items() if task.is_binary]
    return binary[0] if binary else experiment.task_names()[0]


def run_words(experiment: Experiment) -> Dict[str, Any]:
    config = experiment.config
    weights = experiment.pretrained()
    related: Dict[str, List[Dict[str, Any]]] = {}
    with experiment.stage("words") as out:
        for name, (_, dataset) in experiment.tasks().items():
            neuron_set = experiment.neuron_set(name)
            trial_set = experiment.trial_set(name)
            prompts: Optional[PromptGroup] = trial_set.groups[trial_set.best_trial] if config.find.token_source == "prompt" else None
            related[name] = [
                related_words(weights, neuron, dataset.train, config.words.k, prompts) for neuron in neuron_set.neurons[: config.words.neurons]
            ]
        out.json("words/related.json", related)

        target = _robustness_task(experiment)
        task, dataset = experiment.tasks()[target]
        trials = config.words.robustness_trials or config.tune.trials
        robustness = label_word_robustness(
            weights,
            task,
            dataset,
            replace(config.tune, trials=trials),
            config.find,
            experiment.task_seed(target, PURPOSE_WORDS),
            draws=config.words.label_word_draws,
            workers=experiment.workers,
        )
        out.json("words/robustness.json", robustness.to_dict())
    return {"related": related, "robustness": robustness.to_dict()}
