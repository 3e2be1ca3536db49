"""Skill-neuron-guided pruning with bias folding, single-thread benchmarking and the ON indicator."""

from skillprobe.compress.bench import BenchResult, benchmark, run_isolated, time_forward
from skillprobe.compress.prune import (
    PrunePlan,
    build_prune_plan,
    count_parameters,
    flop_ratio,
    fold,
    forward_flops,
    kept_count,
    plan_widths,
    pruned_layer_range,
)
from skillprobe.compress.transfer import (
    TransferReport,
    activated,
    jaccard,
    mean_prompt_activation,
    on_metric,
    transfer_indicator,
)

__all__ = [
    "BenchResult",
    "PrunePlan",
    "TransferReport",
    "activated",
    "benchmark",
    "build_prune_plan",
    "count_parameters",
    "flop_ratio",
    "fold",
    "forward_flops",
    "jaccard",
    "kept_count",
    "mean_prompt_activation",
    "on_metric",
    "plan_widths",
    "pruned_layer_range",
    "run_isolated",
    "time_forward",
    "transfer_indicator",
]
