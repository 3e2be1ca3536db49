"""
Model stages: MLM pre-training, all tuning regimes with their untrained baselines, and skill-neuron finding.
"""

from __future__ import annotations

from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from skillprobe.config import TuneConfig
from skillprobe.model.pretrain import mlm_pretrain
from skillprobe.model.serialization import save_adapters, save_weights
from skillprobe.model.weights import ModelWeights, init_adapters, init_weights
from skillprobe.numerics.rng import SeededRng
from skillprobe.pipeline.workspace import Experiment
from skillprobe.skillfind.finder import build_tables, find_skill_neurons
from skillprobe.skillfind.probe import subtask_probe
from skillprobe.skillfind.table import PredictivityTable, predictivity_histogram
from skillprobe.tasks.types import Dataset, TaskSpec
from skillprobe.tuning.evaluate import evaluate
from skillprobe.tuning.prompts import TrialSet, make_hard_prompt, make_random_prompts
from skillprobe.tuning.trainer import adapter_tune, bitfit_tune, run_trials

# Stream ids under the experiment seed.
INIT_STREAM = 0
RANDOM_MODEL_STREAM = 1
PRETRAIN_STREAM = 2

# Purposes folded into per-task seeds.
PURPOSE_TUNE = 1
PURPOSE_BASELINE = 2
PURPOSE_BITFIT = 3
PURPOSE_ADAPTER = 4
PURPOSE_PROBE = 5
PURPOSE_PERTURB = 6
PURPOSE_WORDS = 7
PURPOSE_PRUNE = 8

BASELINE_KINDS = ("random", "hard")


def pretrain_corpus(experiment: Experiment) -> List[Tuple[int, ...]]:
    """Unlabeled train-split inputs of every task."""
    corpus: List[Tuple[int, ...]] = []
    for _, dataset in experiment.tasks().values():
        corpus.extend(dataset.tokens("train"))
    return corpus


def run_pretrain(experiment: Experiment) -> Dict[str, Any]:
    config = experiment.config
    with experiment.stage("pretrain") as out:
        initial = init_weights(config.model, SeededRng(config.seed, INIT_STREAM))
        random_model = init_weights(config.model, SeededRng(config.seed, RANDOM_MODEL_STREAM))
        corpus = pretrain_corpus(experiment)
        weights, result = mlm_pretrain(initial, corpus, SeededRng(config.seed, PRETRAIN_STREAM), config.pretrain)

        for name, model in (("pretrained.bin", weights), ("random_init.bin", random_model)):
            path = out.path("model", name)
            save_weights(model, path)
            out.track(path)
        out.csv("model/pretrain_loss.csv", ["step", "loss"], ({"step": step, "loss": float(loss)} for step, loss in enumerate(result.losses)))
        summary = {
            "steps": len(result.losses),
            "initial_loss": result.initial_loss,
            "final_loss": result.final_loss,
            "parameters": weights.parameter_count(),
            "corpus_sequences": len(corpus),
        }
        out.json("model/pretrain.json", summary)
    return summary


# -----------------------------------------------------------------------------
# Tuning
# -----------------------------------------------------------------------------


def hard_prompt_tokens(task: TaskSpec, length: int) -> List[int]:
    """The task's cue tokens (or label words when it has none) repeated to ``length`` rows."""
    source = list(task.cue_tokens) or list(task.verbalizer)
    return [int(t) for t in np.resize(np.asarray(source, dtype=np.int64), length)]


def make_baselines(weights: ModelWeights, task: TaskSpec, tune: TuneConfig, seed: int) -> Dict[str, TrialSet]:
    """Untrained prompt baselines: one random group per trial, each on its own stream, and the single hard prompt."""
    random_groups = [make_random_prompts(tune, weights.config.d, tune.num_prompts, SeededRng(seed, k)) for k in range(tune.trials)]
    hard = make_hard_prompt(hard_prompt_tokens(task, tune.num_prompts), weights["embed.tokens"])
    return {
        "random": TrialSet(task=task.name, groups=random_groups),
        "hard": TrialSet(task=task.name, groups=[hard]),
    }


def score_baseline(weights: ModelWeights, task: TaskSpec, dataset: Dataset, baseline: TrialSet) -> TrialSet:
    """Fill per-group dev and test accuracies of an untrained baseline on ``weights``."""
    return TrialSet(
        task=baseline.task,
        groups=list(baseline.groups),
        dev_accuracy=[evaluate(weights, task, dataset, "dev", group) for group in baseline.groups],
        test_accuracy=[evaluate(weights, task, dataset, "test", group) for group in baseline.groups],
    )


def _curve_rows(results) -> List[Dict[str, Any]]:
    return [{"trial": k, "step": step, "dev_accuracy": float(acc)} for k, result in enumerate(results) for step, acc in result.curve]


def _tune_task(experiment: Experiment, out, weights: ModelWeights, random_model: ModelWeights, name: str) -> Dict[str, Any]:
    config = experiment.config
    task, dataset = experiment.tasks()[name]
    trial_set, results = run_trials(weights, task, dataset, config.tune, experiment.task_seed(name, PURPOSE_TUNE), experiment.workers)
    out.track(*trial_set.save(out.path("tune", name)))
    out.csv(f"tune/{name}/curves.csv", ["trial", "step", "dev_accuracy"], _curve_rows(results))

    untrained = make_baselines(weights, task, config.tune, experiment.task_seed(name, PURPOSE_BASELINE))
    baselines = {kind: score_baseline(weights, task, dataset, trials) for kind, trials in untrained.items()}
    for kind, trials in baselines.items():
        out.track(*trials.save(out.path("tune", name, "baselines", kind)))
    random_model_test = [evaluate(random_model, task, dataset, "test", group) for group in baselines["random"].groups]

    bitfit, bitfit_result = bitfit_tune(weights, task, dataset, config.tune, SeededRng(experiment.task_seed(name, PURPOSE_BITFIT), 0))
    save_weights(bitfit, out.path("tune", name, "bitfit.bin"))
    out.track(out.path("tune", name, "bitfit.bin"))

    adapter_seed = experiment.task_seed(name, PURPOSE_ADAPTER)
    start = init_adapters(config.model, SeededRng(adapter_seed, 0), config.tune.adapter_bottleneck)
    adapters, adapter_result = adapter_tune(weights, start, task, dataset, config.tune, SeededRng(adapter_seed, 1))
    save_adapters(adapters, out.path("tune", name, "adapters.bin"))
    out.track(out.path("tune", name, "adapters.bin"))

    out.json(
        f"tune/{name}/runs.json",
        {"prompt": results, "bitfit": bitfit_result, "adapter": adapter_result},
    )
    test_acc = np.asarray(trial_set.test_accuracy)
    best = trial_set.best_trial
    return {
        "task": name,
        "family": task.family,
        "num_classes": task.num_classes,
        "prompt_test_mean": float(test_acc.mean()),
        "prompt_test_std": float(test_acc.std()),
        "prompt_best_trial": best,
        "prompt_best_test": float(test_acc[best]),
        "random_prompt_test": float(np.mean(baselines["random"].test_accuracy)),
        "random_prompt_test_std": float(np.std(baselines["random"].test_accuracy)),
        "hard_prompt_test": float(baselines["hard"].test_accuracy[0]),
        "random_model_test": float(np.mean(random_model_test)),
        "random_model_test_std": float(np.std(random_model_test)),
        "bitfit_test": evaluate(bitfit, task, dataset, "test"),
        "adapter_test": evaluate(weights, task, dataset, "test", adapters=adapters),
        "stalled": int(sum(r.stalled for r in results) + bitfit_result.stalled + adapter_result.stalled),
    }


def run_tune(experiment: Experiment) -> List[Dict[str, Any]]:
    weights = experiment.pretrained()
    random_model = experiment.random_model()
    rows = []
    with experiment.stage("tune") as out:
        for name in experiment.task_names():
            experiment.logger.info("tuning task=%s (prompt x%s, bitfit, adapter)", name, experiment.config.tune.trials)
            rows.append(_tune_task(experiment, out, weights, random_model, name))
        out.csv("tune/accuracy.csv", list(rows[0]), rows)
        out.json("tune/accuracy.json", rows)
    return rows


# -----------------------------------------------------------------------------
# Finding
# -----------------------------------------------------------------------------


def _top1(tables: Dict[str, PredictivityTable]) -> Tuple[float, float]:
    """Mean over targets of the best neuron's dev predictivity and of its test predictivity."""
    dev, test = [], []
    for table in tables.values():
        neuron = table.top(1)[0]
        dev.append(float(table.overall[neuron.layer, neuron.index]))
        test.append(float(table.overall_test[neuron.layer, neuron.index]))
    return float(np.mean(dev)), float(np.mean(test))


def trial_top1(tables: Dict[str, PredictivityTable]) -> np.ndarray:
    """(trials,) best single-neuron dev predictivity of each prompt group, averaged over targets."""
    return np.mean([table.best_pred.reshape(table.num_trials, -1).max(axis=1) for table in tables.values()], axis=0)


def origin_predictivity(
    experiment: Experiment,
    weights: ModelWeights,
    random_model: ModelWeights,
    task: TaskSpec,
    dataset: Dataset,
    baselines: Dict[str, TrialSet],
) -> Dict[str, float]:
    """Top-1 predictivity (mean and std over prompt groups) of untrained prompts and of a randomly initialized model."""
    config = experiment.config
    sources: Sequence[Tuple[str, ModelWeights, TrialSet]] = (
        ("random_prompt", weights, baselines["random"]),
        ("hard_prompt", weights, baselines["hard"]),
        ("random_model", random_model, baselines["random"]),
    )
    row: Dict[str, float] = {"random_guess": 1.0 / task.num_classes}
    for label, model, trials in sources:
        tables = build_tables(model, trials, task, dataset, config.find, experiment.workers)
        scores = trial_top1(tables)
        row[label] = float(scores.mean())
        row[f"{label}_std"] = float(scores.std())
    return row


def _histogram_series(out, bundle, name: str, tables: Dict[str, PredictivityTable], bins: int) -> None:
    histograms = {target: predictivity_histogram(table, bins) for target, table in tables.items()}
    out.json(f"find/{name}/histogram.json", histograms)
    for target, hist in histograms.items():
        edges = hist["edges"]
        bundle.add_series(
            f"{name}_{target}_predictivity",
            {"bin_low": edges[:-1], "bin_high": edges[1:], "mean": hist["mean"], "sem": hist["sem"]},
            kind="histogram",
            meta={"task": name, "target": target},
        )


def run_find(experiment: Experiment) -> Dict[str, Any]:
    config = experiment.config
    weights = experiment.pretrained()
    random_model = experiment.random_model()
    trial_sets = {name: experiment.trial_set(name) for name in experiment.task_names()}
    accuracy = {row["task"]: row for row in experiment.stage_output("tune/accuracy.json")}

    performance, origin = [], []
    with experiment.stage("find") as out:
        bundle = out.bundle("plots/find")
        for name, (task, dataset) in experiment.tasks().items():
            trial_set = trial_sets[name]
            tables, neuron_set = find_skill_neurons(weights, trial_set, task, dataset, config.find, experiment.workers)
            for table in tables.values():
                out.track(*table.save(out.path("find", name, "tables")))
            out.track(neuron_set.save(out.path("find", name, "skill_neurons.json")))
            _histogram_series(out, bundle, name, tables, config.find.histogram_bins)

            top1_dev, top1_test = _top1(tables)
            row: Dict[str, Any] = {
                "task": name,
                "num_classes": task.num_classes,
                "prompt_test_mean": accuracy[name]["prompt_test_mean"],
                "prompt_test_std": accuracy[name]["prompt_test_std"],
                "top1_pred_dev": top1_dev,
                "top1_pred_test": top1_test,
                "skill_neuron_test": top1_test,
            }
            if not task.is_binary:
                probe = subtask_probe(weights, trial_set, dataset, tables, config.find, experiment.task_seed(name, PURPOSE_PROBE))
                out.json(f"find/{name}/probe.json", probe)
                row["skill_neuron_test"] = probe["accuracy"]
            performance.append(row)

            baselines = {kind: experiment.baseline_trials(name, kind) for kind in BASELINE_KINDS}
            origin_row: Dict[str, Any] = {"task": name, "tuned_prompt": top1_dev}
            origin_row.update(origin_predictivity(experiment, weights, random_model, task, dataset, baselines))
            origin_row["bitfit_test"] = accuracy[name]["bitfit_test"]
            origin_row["adapter_test"] = accuracy[name]["adapter_test"]
            origin.append(origin_row)

        out.csv("find/performance.csv", list(performance[0]), performance)
        out.csv("find/origin.csv", list(origin[0]), origin)
        summary = {"performance": performance, "origin": origin, "config": config.find}
        out.json("find/summary.json", summary)
        out.close_bundle(bundle)
    return summary
