"""Experiment manifest: stored-config hash, per-stage file lists and timestamps."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from skillprobe import __version__
from skillprobe.exception import FormatException
from skillprobe.output.exporters import read_json, write_json

PathLike = Union[str, Path]

MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.yaml"
TIMING_FILE = "timing.json"
LOG_DIR = "logs"
ARTIFACT_VERSIONS = {"weights": 1, "prompts": 1, "adapters": 1, "tables": 1}


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as file_obj:
        for chunk in iter(lambda: file_obj.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class StageRecord:
    files: List[str] = field(default_factory=list)
    started: str = ""
    finished: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"files": sorted(self.files), "started": self.started, "finished": self.finished}


@dataclass
class Manifest:
    root: Path
    config_sha256: str = ""
    stages: Dict[str, StageRecord] = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_FILE

    @classmethod
    def load(cls, root: PathLike) -> "Manifest":
        """Existing manifest of ``root``, or an empty one."""
        root = Path(root)
        path = root / MANIFEST_FILE
        if not path.exists():
            return cls(root=root)
        data = read_json(path)
        try:
            stages = {
                name: StageRecord(files=list(entry["files"]), started=str(entry.get("started", "")), finished=str(entry.get("finished", "")))
                for name, entry in data.get("stages", {}).items()
            }
            return cls(root=root, config_sha256=str(data.get("config_sha256", "")), stages=stages)
        except (KeyError, TypeError) as exc:
            raise FormatException(f"{path}: malformed manifest ({exc})") from exc

    def relative(self, path: PathLike) -> str:
        return Path(path).resolve().relative_to(self.root.resolve()).as_posix()

    def record(self, stage: str, files: Sequence[PathLike], started: str, finished: str) -> None:
        """Replace the file list of ``stage``; files another stage lists move to this one."""
        names = sorted({self.relative(path) for path in files})
        for other, entry in self.stages.items():
            if other != stage:
                entry.files = [name for name in entry.files if name not in names]
        self.stages[stage] = StageRecord(files=names, started=started, finished=finished)

    def listed(self) -> List[str]:
        return sorted({name for entry in self.stages.values() for name in entry.files})

    def unlisted(self) -> List[str]:
        """Files under the root that no stage lists (logs and the manifest itself excluded)."""
        listed = set(self.listed())
        found = []
        for path in sorted(self.root.rglob("*")):
            if not path.is_file():
                continue
            name = self.relative(path)
            if name == MANIFEST_FILE or name.split("/", 1)[0] == LOG_DIR:
                continue
            if name not in listed:
                found.append(name)
        return found

    def missing(self) -> List[str]:
        return [name for name in self.listed() if not (self.root / name).exists()]

    def config_matches(self, config_path: Optional[PathLike] = None) -> bool:
        path = Path(config_path) if config_path is not None else self.root / CONFIG_FILE
        return bool(self.config_sha256) and path.exists() and sha256_file(path) == self.config_sha256

    def save(self) -> Path:
        return write_json(
            self.path,
            {
                "skillprobe_version": __version__,
                "artifact_versions": ARTIFACT_VERSIONS,
                "config_sha256": self.config_sha256,
                "stages": {name: entry.to_dict() for name, entry in sorted(self.stages.items())},
            },
        )
