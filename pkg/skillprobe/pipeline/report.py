"""Collate stage outputs into one summary document."""

from __future__ import annotations

from typing import Any, Dict

from skillprobe.pipeline.workspace import Experiment

REPORT_FILE = "report/summary.json"

# Section name -> stage output it is built from.
REQUIRED_SECTIONS = {
    "accuracy": ("tune/accuracy.json", "find/summary.json"),
    "perturbation": ("perturb/summary.json",),
    "specificity": ("correlate/correlation.json", "perturb/summary.json"),
    "origin": ("find/summary.json",),
    "prune": ("prune/summary.json",),
}
OPTIONAL_SECTIONS = {
    "words": ("words/related.json", "words/robustness.json"),
    "transfer": ("transfer/transfer.json",),
}


def build_report(experiment: Experiment) -> Dict[str, Any]:
    """Accuracy table, perturbation curves, specificity matrices, origin baselines and pruning results.

    Word inspection and transferability join when their stages have run. Bench timing stays in
    ``bench/timing.json`` so this document is reproducible byte for byte.
    """
    for relative_paths in REQUIRED_SECTIONS.values():
        for relative in relative_paths:
            experiment.stage_output(relative)

    find = experiment.stage_output("find/summary.json")
    perturb = experiment.stage_output("perturb/summary.json")
    report: Dict[str, Any] = {
        "tasks": experiment.task_names(),
        "accuracy": {
            "tuning": experiment.stage_output("tune/accuracy.json"),
            "skill_neurons": find["performance"],
        },
        "perturbation": {"curves": perturb["curves"], "contrast": perturb["contrast"]},
        "specificity": {
            "correlation": experiment.stage_output("correlate/correlation.json"),
            "importance": perturb["importance"],
        },
        "origin": find["origin"],
        "prune": experiment.stage_output("prune/summary.json"),
    }
    if all(experiment.path(rel).exists() for rel in OPTIONAL_SECTIONS["words"]):
        report["words"] = {
            "related": experiment.stage_output("words/related.json"),
            "robustness": experiment.stage_output("words/robustness.json"),
        }
    if experiment.path("transfer/transfer.json").exists():
        report["transfer"] = experiment.stage_output("transfer/transfer.json")
    return report


def run_report(experiment: Experiment) -> Dict[str, Any]:
    report = build_report(experiment)
    with experiment.stage("report") as out:
        out.json(REPORT_FILE, report)
    experiment.logger.info("summary written to %s (%s sections)", experiment.path(REPORT_FILE), len(report) - 1)
    return report
