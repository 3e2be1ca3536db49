"""Right-padding of variable-length token sequences."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from skillprobe.config import PAD_ID
from skillprobe.exception import InputException


def pad_sequences(sequences: Sequence[Sequence[int]], pad_id: int = PAD_ID) -> np.ndarray:
    """Stack sequences into a (batch, max_len) int array, right-padded with ``pad_id``."""
    if len(sequences) == 0:
        raise InputException("cannot pad an empty batch")
    width = max(len(seq) for seq in sequences)
    batch = np.full((len(sequences), width), pad_id, dtype=np.int64)
    for row, seq in enumerate(sequences):
        batch[row, : len(seq)] = seq
    return batch
