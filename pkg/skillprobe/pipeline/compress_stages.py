"""Compression stages: skill-neuron pruning, isolated benchmarking, prompt transferability."""

from __future__ import annotations

from typing import Any, Dict, List

import numpy as np

from skillprobe.compress.bench import run_isolated
from skillprobe.compress.prune import build_prune_plan, count_parameters, flop_ratio, fold, plan_widths
from skillprobe.compress.transfer import transfer_indicator
from skillprobe.exception import ConfigException, ProcessingException
from skillprobe.model.batching import pad_sequences
from skillprobe.model.serialization import save_weights
from skillprobe.numerics.rng import SeededRng
from skillprobe.pipeline.stages import PURPOSE_PRUNE
from skillprobe.pipeline.workspace import Experiment
from skillprobe.skillfind.table import PredictivityTable
from skillprobe.tuning.evaluate import evaluate_samples, label_logits
from skillprobe.tuning.trainer import prompt_tune

# Folded and hooked logits agree up to float64 summation order.
FOLD_TOLERANCE = 1e-9


def prune_task_names(experiment: Experiment) -> List[str]:
    configured = experiment.config.prune.tasks
    names = experiment.task_names()
    if not configured:
        return names
    unknown = [name for name in configured if name not in names]
    if unknown:
        raise ConfigException(f"prune.tasks names unknown tasks {unknown}")
    return list(configured)


def clamp_table(tables: Dict[str, PredictivityTable]) -> PredictivityTable:
    """Table whose baselines clamp a task: the task itself, or the subtask with the most train samples."""
    return max((tables[key] for key in sorted(tables)), key=lambda table: table.train_count)


def _prune_task(experiment: Experiment, out, weights, name: str) -> Dict[str, Any]:
    config = experiment.config
    prune = config.prune
    task, dataset = experiment.tasks()[name]
    trial_set = experiment.trial_set(name)
    best = trial_set.best_trial
    prompts = trial_set.groups[best]
    neuron_set = experiment.neuron_set(name)

    plan = build_prune_plan(
        neuron_set.scores,
        clamp_table(experiment.tables(name)),
        prune.keep_fraction,
        prune.layer_fraction,
        trial=best,
        clamp_mode=prune.clamp_mode,
    )
    pruned = fold(weights, plan)

    test = dataset.test
    hooked = label_logits(weights, task, test, prompts, hook=plan.clamp_hook())
    folded = label_logits(pruned, task, test, prompts)
    deviation = float(np.max(np.abs(hooked - folded))) if hooked.size else 0.0
    if deviation > FOLD_TOLERANCE:
        raise ProcessingException(f"task '{name}': folded model deviates from the clamped model by {deviation:.3e}")

    pruned_path = out.path("prune", name, "pruned.bin")
    save_weights(pruned, pruned_path)
    out.track(pruned_path)
    out.json(f"prune/{name}/plan.json", plan.to_dict())

    retuned, retune_result = prompt_tune(pruned, task, dataset, config.tune, SeededRng(experiment.task_seed(name, PURPOSE_PRUNE), 0), init=prompts)
    retuned_path = out.path("prune", name, "prompts.bin")
    retuned.save(retuned_path)
    out.track(retuned_path)

    widths = plan_widths(plan)
    full_params = weights.parameter_count()
    pruned_params = pruned.parameter_count()
    if (full_params, pruned_params) != (count_parameters(weights.config), count_parameters(weights.config, widths)):
        raise ProcessingException(f"task '{name}': stored parameter counts disagree with the closed form")
    seq_len = config.tune.num_prompts + 1 + max(len(sample.tokens) for sample in test)
    return {
        "task": name,
        "best_trial": best,
        "pruned_layers": len(plan.layers),
        "kept_per_layer": int(next(iter(widths.values()), weights.config.d_m)),
        "full_test": evaluate_samples(weights, task, test, prompts),
        "clamped_test": evaluate_samples(weights, task, test, prompts, hook=plan.clamp_hook()),
        "pruned_test": evaluate_samples(pruned, task, test, prompts),
        "retuned_test": evaluate_samples(pruned, task, test, retuned),
        "retune_stalled": bool(retune_result.stalled),
        "fold_max_abs_deviation": deviation,
        "full_parameters": full_params,
        "pruned_parameters": pruned_params,
        "parameter_ratio": full_params / pruned_params,
        "flop_ratio": flop_ratio(weights.config, seq_len, plan),
        "seq_len": seq_len,
    }


def run_prune(experiment: Experiment) -> Dict[str, Any]:
    weights = experiment.pretrained()
    names = prune_task_names(experiment)
    rows = []
    with experiment.stage("prune") as out:
        for name in names:
            experiment.logger.info("pruning task=%s keep_fraction=%s", name, experiment.config.prune.keep_fraction)
            rows.append(_prune_task(experiment, out, weights, name))
        out.csv("prune/summary.csv", list(rows[0]), rows)
        summary = {"tasks": rows, "config": experiment.config.prune}
        out.json("prune/summary.json", summary)
    return summary


def bench_inputs(experiment: Experiment, name: str) -> np.ndarray:
    """First ``bench_batch`` test inputs of a task, cycled when the split is shorter."""
    _, dataset = experiment.tasks()[name]
    test = dataset.test
    count = experiment.config.prune.bench_batch
    return pad_sequences([test[i % len(test)].tokens for i in range(count)])


def run_bench(experiment: Experiment) -> Dict[str, Any]:
    prune = experiment.config.prune
    names = prune_task_names(experiment)
    full_path = experiment.path("model", "pretrained.bin")
    experiment.require("pretrain", "model/pretrained.bin")
    for name in names:
        experiment.require("prune", f"prune/{name}/pruned.bin", f"prune/{name}/prompts.bin")

    results: Dict[str, Any] = {}
    with experiment.stage("bench") as out:
        for name in names:
            experiment.logger.info("benchmarking task=%s repetitions=%s", name, prune.bench_repetitions)
            result = run_isolated(
                full_path,
                experiment.path("prune", name, "pruned.bin"),
                bench_inputs(experiment, name),
                experiment.path("prune", name, "prompts.bin"),
                repetitions=prune.bench_repetitions,
                warmup=prune.bench_warmup,
            )
            results[name] = result.to_dict()
        out.json("bench/timing.json", results)
    return results


def run_transfer(experiment: Experiment) -> Dict[str, Any]:
    weights = experiment.pretrained()
    names = experiment.task_names()
    trial_sets = {name: experiment.trial_set(name) for name in names}
    neuron_sets = {name: experiment.neuron_set(name) for name in names}
    with experiment.stage("transfer") as out:
        report = transfer_indicator(weights, experiment.tasks(), trial_sets, neuron_sets, experiment.config.transfer)
        out.csv("transfer/transfer.csv", ["source", "target", "transfer_acc", "on", "on_masked"], report.rows())
        summary = report.to_dict()
        out.json("transfer/transfer.json", summary)
    return summary
