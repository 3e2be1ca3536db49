"""Stage orchestration behind the command line: one function per subcommand over an experiment directory."""

from typing import Any, Callable, Dict, Iterable, Optional

from skillprobe.pipeline.analysis_stages import run_correlate, run_perturb, run_words
from skillprobe.pipeline.compress_stages import run_bench, run_prune, run_transfer
from skillprobe.pipeline.manifest import Manifest
from skillprobe.pipeline.report import build_report, run_report
from skillprobe.pipeline.stages import run_find, run_pretrain, run_tune
from skillprobe.pipeline.workspace import Experiment, StageWriter

STAGES: Dict[str, Callable[[Experiment], Any]] = {
    "pretrain": run_pretrain,
    "tune": run_tune,
    "find": run_find,
    "perturb": run_perturb,
    "correlate": run_correlate,
    "words": run_words,
    "prune": run_prune,
    "bench": run_bench,
    "transfer": run_transfer,
    "report": run_report,
}


def run_all(experiment: Experiment, skip: Optional[Iterable[str]] = None) -> Dict[str, Any]:
    """Every stage in order; ``skip`` names stages to leave out (their outputs must already exist if needed)."""
    skipped = set(skip or ())
    results = {}
    for index, (name, stage) in enumerate(STAGES.items(), start=1):
        if name in skipped:
            experiment.logger.info("STEP %s/%s - %s skipped", index, len(STAGES), name)
            continue
        experiment.logger.info("STEP %s/%s - %s", index, len(STAGES), name)
        results[name] = stage(experiment)
    return results


__all__ = [
    "Experiment",
    "Manifest",
    "STAGES",
    "StageWriter",
    "build_report",
    "run_all",
    "run_bench",
    "run_correlate",
    "run_find",
    "run_perturb",
    "run_pretrain",
    "run_prune",
    "run_report",
    "run_transfer",
    "run_tune",
    "run_words",
]
