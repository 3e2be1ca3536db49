"""Export helpers for report JSON, CSV tables and plot-data bundles."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from skillprobe.utils.logger import logger_service

logger = logger_service.get_pipeline_logger()

PathLike = Union[str, Path]


def _to_jsonable(value: Any) -> Any:
    """Best-effort conversion of values into JSON-serializable forms."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None

    if isinstance(value, (str, int, bool)) or value is None:
        return value

    if isinstance(value, Path):
        return value.as_posix()

    if isinstance(value, dict):
        return {str(key): _to_jsonable(item) for key, item in value.items()}

    if isinstance(value, (list, tuple, set)):
        return [_to_jsonable(item) for item in value]

    if hasattr(value, "tolist"):
        try:
            return _to_jsonable(value.tolist())
        except Exception:
            pass

    if hasattr(value, "item"):
        try:
            return _to_jsonable(value.item())
        except Exception:
            pass

    if hasattr(value, "__dict__"):
        try:
            return _to_jsonable(vars(value))
        except Exception:
            pass

    return str(value)


def fmt_float(value: float) -> str:
    """Nine significant digits: enough to round-trip a 32-bit float."""
    return f"{float(value):.9g}"


def dumps_json(payload: Any) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_to_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: PathLike, payload: Any) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="\n") as file_obj:
        file_obj.write(dumps_json(payload))
    logger.info("wrote %s", target)
    return target


def read_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: PathLike, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """CSV with a header row and LF line endings; floats rendered by ``fmt_float``."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with target.open("w", newline="", encoding="utf-8") as file_obj:
        writer = csv.DictWriter(file_obj, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: fmt_float(val) if isinstance(val, float) else val for key, val in row.items()})
            count += 1
    logger.info("wrote %s (%s rows)", target, count)
    return target


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    with Path(path).open("r", newline="", encoding="utf-8") as file_obj:
        return list(csv.DictReader(file_obj))


class PlotDataBundle:
    """Directory of CSV series plus an ``index.json`` describing them, for external plotting."""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._series: Dict[str, Dict[str, Any]] = {}
        self.written: List[Path] = []

    def add_series(
        self,
        name: str,
        columns: Mapping[str, Sequence[Any]],
        kind: str = "line",
        meta: Optional[Mapping[str, Any]] = None,
    ) -> Path:
        lengths = {len(values) for values in columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"plot series '{name}' has columns of different lengths {sorted(lengths)}")
        fieldnames = list(columns)
        size = lengths.pop() if lengths else 0
        rows = [{field: _to_jsonable(columns[field][i]) for field in fieldnames} for i in range(size)]
        path = write_csv(self.root / f"{name}.csv", fieldnames, rows)
        self._series[name] = {"file": path.name, "kind": kind, "columns": fieldnames, "meta": dict(meta or {})}
        self.written.append(path)
        return path

    def add_matrix(self, name: str, labels: Sequence[str], matrix: Any, meta: Optional[Mapping[str, Any]] = None) -> Path:
        """Square labeled matrix as long-form rows (row, col, value)."""
        rows, cols, values = [], [], []
        for i, row_label in enumerate(labels):
            for j, col_label in enumerate(labels):
                rows.append(row_label)
                cols.append(col_label)
                values.append(float(matrix[i][j]))
        return self.add_series(name, {"row": rows, "col": cols, "value": values}, kind="heatmap", meta=meta)

    def finalize(self) -> Path:
        path = write_json(self.root / "index.json", {"series": self._series})
        self.written.append(path)
        return path
