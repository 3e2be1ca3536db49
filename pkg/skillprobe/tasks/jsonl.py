"""Small-dataset ingestion from JSONL records and a token-per-line vocab file."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from skillprobe.config import UNK_ID
from skillprobe.exception import InputException, ParseException, ValidationException
from skillprobe.tasks.types import SPLITS, Dataset, Sample, split_counts

PathLike = Union[str, Path]


def load_vocab(path: PathLike) -> Dict[str, int]:
    """Token per line; the 0-based line number is the token id."""
    vocab: Dict[str, int] = {}
    for index, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        token = line.strip()
        if token and token not in vocab:
            vocab[token] = index
    if not vocab:
        raise InputException(f"vocab file {path} is empty")
    return vocab


def _stable_key(index: int) -> str:
    return hashlib.blake2b(str(index).encode("utf-8"), digest_size=8).hexdigest()


def _parse_record(raw: str, line_number: int, vocab: Dict[str, int], vocab_size: int) -> Tuple[Tuple[int, ...], int, Optional[str]]:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseException(f"invalid JSON ({exc.msg})", line_number=line_number) from exc
    if not isinstance(record, dict):
        raise ParseException("record is not an object", line_number=line_number)

    label = record.get("label")
    if isinstance(label, bool) or not isinstance(label, int):
        raise ParseException(f"label must be an integer, got {label!r}", line_number=line_number)

    if "tokens" in record:
        raw_tokens = record["tokens"]
        if not isinstance(raw_tokens, list) or not all(isinstance(t, int) and not isinstance(t, bool) for t in raw_tokens):
            raise ParseException("tokens must be a list of integers", line_number=line_number)
        tokens = tuple(t if 0 <= t < vocab_size else UNK_ID for t in raw_tokens)
    elif "text" in record and isinstance(record["text"], str):
        tokens = tuple(vocab.get(word, UNK_ID) for word in record["text"].split())
    else:
        raise ParseException("record needs a 'tokens' list or a 'text' string", line_number=line_number)

    split = record.get("split")
    if split is not None and split not in SPLITS:
        raise ParseException(f"split must be one of {SPLITS}, got {split!r}", line_number=line_number)
    return tokens, label, split


def load_jsonl(path: PathLike, vocab: Dict[str, int], num_classes: Optional[int] = None, vocab_size: Optional[int] = None) -> Dataset:
    """Load a labeled JSONL file.

    Records without a ``split`` field are assigned 60/20/20 by a stable hash of their line index.
    Unknown words and out-of-range token ids map to UNK.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    size = vocab_size if vocab_size is not None else max(vocab.values()) + 1
    parsed: List[Tuple[int, Tuple[int, ...], int, Optional[str]]] = []
    for line_number, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        tokens, label, split = _parse_record(raw, line_number, vocab, size)
        parsed.append((line_number, tokens, label, split))
    if not parsed:
        raise InputException(f"dataset file {path} contains no records")

    classes = num_classes if num_classes is not None else max(label for _, _, label, _ in parsed) + 1
    for line_number, _, label, _ in parsed:
        if not 0 <= label < classes:
            raise ValidationException(f"line {line_number}: label {label} outside [0, {classes})")

    assigned: Dict[str, List[Sample]] = {split: [] for split in SPLITS}
    unassigned = []
    for index, (line_number, tokens, label, split) in enumerate(parsed):
        sample = Sample(uid=index, tokens=tokens, label=label)
        if split is None:
            unassigned.append((_stable_key(index), index, sample))
        else:
            assigned[split].append(sample)

    unassigned.sort()
    n_train, n_dev, _ = split_counts(len(unassigned))
    for position, (_, _, sample) in enumerate(unassigned):
        target = "train" if position < n_train else "dev" if position < n_train + n_dev else "test"
        assigned[target].append(sample)

    for split in SPLITS:
        assigned[split].sort(key=lambda sample: sample.uid)
    return Dataset(
        num_classes=classes,
        train=tuple(assigned["train"]),
        dev=tuple(assigned["dev"]),
        test=tuple(assigned["test"]),
        meta={"source": str(path)},
    )
