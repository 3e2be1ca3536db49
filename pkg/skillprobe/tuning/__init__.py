"""Prompt tuning, BitFit, adapter tuning, untrained baselines and evaluation."""

from skillprobe.tuning.evaluate import accuracy_from_logits, evaluate, evaluate_samples, label_logits, prompt_values
from skillprobe.tuning.prompts import PromptGroup, TrialSet, make_hard_prompt, make_random_prompts
from skillprobe.tuning.trainer import (
    TuneResult,
    adapter_tune,
    bitfit_tune,
    prompt_tune,
    run_trials,
    train_loop,
    verbalizer_loss,
)

__all__ = [
    "PromptGroup",
    "TrialSet",
    "TuneResult",
    "accuracy_from_logits",
    "adapter_tune",
    "bitfit_tune",
    "evaluate",
    "evaluate_samples",
    "label_logits",
    "make_hard_prompt",
    "make_random_prompts",
    "prompt_tune",
    "prompt_values",
    "run_trials",
    "train_loop",
    "verbalizer_loss",
]
