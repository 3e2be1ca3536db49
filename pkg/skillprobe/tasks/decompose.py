"""Multi-class to binary subtask decomposition."""

from __future__ import annotations

from typing import List, Tuple

from skillprobe.exception import ContractException
from skillprobe.tasks.types import BinarySubtask, Dataset, TaskSpec


def decompose(task: TaskSpec, dataset: Dataset) -> List[Tuple[BinarySubtask, Dataset]]:
    """Relabel ``dataset`` once per subtask of ``task``; tokens are never changed."""
    if task.num_classes < 3:
        raise ContractException(f"task '{task.name}' is binary; there is nothing to decompose")
    return [(subtask, dataset.relabel(subtask.relabel, num_classes=2)) for subtask in task.decomposition]
