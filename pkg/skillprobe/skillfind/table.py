"""Per-neuron predictivity tables and their CSV / npz persistence."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np

from skillprobe.exception import FormatException, ShapeException
from skillprobe.model.weights import NeuronId
from skillprobe.output.exporters import write_csv
from skillprobe.skillfind.predictivity import aggregate

PathLike = Union[str, Path]

TOKEN_FIELDS = ("layer", "index", "trial", "token", "a_bsl", "acc", "pred")
AGGREGATE_FIELDS = ("layer", "index", "pred_overall", "pred_test")


@dataclass
class PredictivityTable:
    """Statistics of every FFN neuron for one binary target.

    Per-token arrays are shaped ``(trials, tokens, layers, d_m)``; the target is either the task
    itself or one of its binary subtasks.
    """

    task: str
    target: str
    a_bsl: np.ndarray
    acc: np.ndarray
    pred: np.ndarray
    test_acc: np.ndarray
    test_pred: np.ndarray
    aggregator: str = "max"
    polarity: str = "both"
    token_source: str = "prompt"
    train_count: int = 0
    dev_count: int = 0
    trial_dev_accuracy: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        shapes = {arr.shape for arr in (self.a_bsl, self.acc, self.pred, self.test_acc, self.test_pred)}
        if len(shapes) != 1 or self.a_bsl.ndim != 4:
            raise ShapeException(f"predictivity arrays must share one (trials, tokens, layers, d_m) shape, got {sorted(shapes)}")

    @property
    def num_trials(self) -> int:
        return int(self.pred.shape[0])

    @property
    def num_tokens(self) -> int:
        return int(self.pred.shape[1])

    @property
    def num_layers(self) -> int:
        return int(self.pred.shape[2])

    @property
    def d_m(self) -> int:
        return int(self.pred.shape[3])

    @property
    def best_token(self) -> np.ndarray:
        """(trials, layers, d_m) index of the highest-Pred token; first on ties."""
        return np.argmax(self.pred, axis=1)

    @property
    def best_pred(self) -> np.ndarray:
        return np.max(self.pred, axis=1)

    @property
    def overall(self) -> np.ndarray:
        """(layers, d_m) aggregated predictivity used for ranking."""
        return aggregate(self.pred, self.aggregator)

    @property
    def overall_test(self) -> np.ndarray:
        """Test predictivity at each trial's dev-selected best token, averaged over trials."""
        picked = np.take_along_axis(self.test_pred, self.best_token[:, None], axis=1)[:, 0]
        return picked.mean(axis=0)

    def clamp_values(self, trial: int, mode: str = "mean_tokens") -> np.ndarray:
        """(layers, d_m) one baseline per neuron from a single trial."""
        if mode == "mean_tokens":
            return self.a_bsl[trial].mean(axis=0)
        if mode == "best_token":
            best = self.best_token[trial]
            return np.take_along_axis(self.a_bsl[trial], best[None], axis=0)[0]
        raise FormatException(f"Unknown clamp mode '{mode}'")

    def top(self, count: int = 1) -> List[NeuronId]:
        order = np.argsort(-self.overall.ravel(), kind="stable")[:count]
        return [NeuronId.from_flat(int(flat), self.d_m) for flat in order]

    # -----------------------------------------------------------------------------
    # Persistence
    # -----------------------------------------------------------------------------

    def _token_rows(self) -> Iterator[Dict[str, Any]]:
        a_bsl = self.a_bsl.astype(np.float32)
        acc = self.acc.astype(np.float32)
        pred = self.pred.astype(np.float32)
        for layer in range(self.num_layers):
            for index in range(self.d_m):
                for trial in range(self.num_trials):
                    for token in range(self.num_tokens):
                        cell = (trial, token, layer, index)
                        yield {
                            "layer": layer,
                            "index": index,
                            "trial": trial,
                            "token": token,
                            "a_bsl": float(a_bsl[cell]),
                            "acc": float(acc[cell]),
                            "pred": float(pred[cell]),
                        }

    def _aggregate_rows(self) -> Iterator[Dict[str, Any]]:
        overall = self.overall.astype(np.float32)
        test = self.overall_test.astype(np.float32)
        for layer in range(self.num_layers):
            for index in range(self.d_m):
                yield {"layer": layer, "index": index, "pred_overall": float(overall[layer, index]), "pred_test": float(test[layer, index])}

    def save(self, directory: PathLike) -> List[Path]:
        """Write ``<target>.csv``, ``<target>_aggregate.csv`` and a lossless ``<target>.npz``."""
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        written = [
            write_csv(root / f"{self.target}.csv", TOKEN_FIELDS, self._token_rows()),
            write_csv(root / f"{self.target}_aggregate.csv", AGGREGATE_FIELDS, self._aggregate_rows()),
        ]
        npz_path = root / f"{self.target}.npz"
        with npz_path.open("wb") as file_obj:
            np.savez(
                file_obj,
                a_bsl=self.a_bsl,
                acc=self.acc,
                pred=self.pred,
                test_acc=self.test_acc,
                test_pred=self.test_pred,
                trial_dev_accuracy=np.asarray(self.trial_dev_accuracy, dtype=np.float64),
                meta=np.array(
                    [self.task, self.target, self.aggregator, self.polarity, self.token_source, str(self.train_count), str(self.dev_count)]
                ),
            )
        written.append(npz_path)
        return written

    @classmethod
    def load(cls, path: PathLike) -> "PredictivityTable":
        try:
            with np.load(Path(path), allow_pickle=False) as data:
                meta = [str(item) for item in data["meta"]]
                return cls(
                    task=meta[0],
                    target=meta[1],
                    aggregator=meta[2],
                    polarity=meta[3],
                    token_source=meta[4],
                    train_count=int(meta[5]),
                    dev_count=int(meta[6]),
                    a_bsl=data["a_bsl"],
                    acc=data["acc"],
                    pred=data["pred"],
                    test_acc=data["test_acc"],
                    test_pred=data["test_pred"],
                    trial_dev_accuracy=[float(v) for v in data["trial_dev_accuracy"]],
                )
        except (KeyError, IndexError, ValueError, OSError) as exc:
            raise FormatException(f"{path}: not a predictivity table ({exc})") from exc


def predictivity_histogram(table: PredictivityTable, bins: int = 20) -> Dict[str, Any]:
    """Per-trial histograms of best-token predictivity with mean and standard error across trials."""
    low = 0.5 if table.polarity == "both" else 0.0
    edges = np.linspace(low, 1.0, bins + 1)
    counts = np.stack([np.histogram(table.best_pred[t].ravel(), bins=edges)[0] for t in range(table.num_trials)])
    fractions = counts / float(table.num_layers * table.d_m)
    sem = fractions.std(axis=0, ddof=1) / np.sqrt(table.num_trials) if table.num_trials > 1 else np.zeros(bins)
    return {
        "target": table.target,
        "edges": edges,
        "per_trial": fractions,
        "mean": fractions.mean(axis=0),
        "sem": sem,
    }


def load_tables(directory: PathLike, targets: Optional[List[str]] = None) -> Dict[str, PredictivityTable]:
    root = Path(directory)
    names = targets if targets is not None else sorted(p.stem for p in root.glob("*.npz"))
    return {name: PredictivityTable.load(root / f"{name}.npz") for name in names}
