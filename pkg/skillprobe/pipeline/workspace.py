"""Experiment directory: paths, stored config, task loading and stage bookkeeping."""

from __future__ import annotations

import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from skillprobe.config import ExperimentConfig
from skillprobe.exception import ConfigException, ConfigValidationException, DependencyException
from skillprobe.model.serialization import load_adapters, load_weights
from skillprobe.model.weights import AdapterParams, ModelWeights
from skillprobe.numerics.rng import derive_seed
from skillprobe.output.exporters import PlotDataBundle, read_json, write_csv, write_json
from skillprobe.pipeline.manifest import CONFIG_FILE, TIMING_FILE, Manifest, sha256_file
from skillprobe.skillfind.finder import SkillNeuronSet
from skillprobe.skillfind.table import PredictivityTable, load_tables
from skillprobe.tasks.jsonl import load_jsonl, load_vocab
from skillprobe.tasks.synthetic import build_synthetic_task
from skillprobe.tasks.types import SPLITS, Dataset, TaskSpec, make_task_spec
from skillprobe.tuning.prompts import TrialSet
from skillprobe.utils.logger import logger_service

PathLike = Union[str, Path]

# Upstream command that produces each artifact family.
PRODUCERS = {
    "model": "pretrain",
    "tune": "tune",
    "find": "find",
    "perturb": "perturb",
    "correlate": "correlate",
    "words": "words",
    "prune": "prune",
    "bench": "bench",
    "transfer": "transfer",
}


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class StageWriter:
    """Collects every file one stage writes so the manifest can list it."""

    def __init__(self, experiment: "Experiment", name: str):
        self.experiment = experiment
        self.name = name
        self.files: List[Path] = []

    def path(self, *parts: str) -> Path:
        return self.experiment.path(*parts)

    def track(self, *paths: PathLike) -> None:
        self.files.extend(Path(p) for p in paths)

    def json(self, relative: str, payload: Any) -> Path:
        path = write_json(self.path(relative), payload)
        self.files.append(path)
        return path

    def csv(self, relative: str, fieldnames: Sequence[str], rows) -> Path:
        path = write_csv(self.path(relative), fieldnames, rows)
        self.files.append(path)
        return path

    def bundle(self, relative: str) -> PlotDataBundle:
        return PlotDataBundle(self.path(relative))

    def close_bundle(self, bundle: PlotDataBundle) -> None:
        bundle.finalize()
        self.files.extend(bundle.written)


class Experiment:
    """One output directory holding every stage's artifacts for one config."""

    def __init__(self, config: ExperimentConfig, root: Optional[PathLike] = None, workers: Optional[int] = None):
        self.config = config
        self.root = Path(root) if root is not None else config.resolve_output_dir()
        self.workers = workers if workers is not None else config.threads
        self.logger = logger_service.get_pipeline_logger()
        self._tasks: Optional[Dict[str, Tuple[TaskSpec, Dataset]]] = None

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    # -----------------------------------------------------------------------------
    # Stored config
    # -----------------------------------------------------------------------------

    def stored_config_text(self) -> str:
        """Config as stored in the directory; worker count and output location do not affect results."""
        data = self.config.to_dict()
        data["threads"] = None
        data["output_dir"] = "."
        return ExperimentConfig.from_dict(data).to_yaml_str()

    def bind_config(self) -> Manifest:
        """Write config.yaml on first use; refuse a directory that holds another config's artifacts."""
        self.root.mkdir(parents=True, exist_ok=True)
        manifest = Manifest.load(self.root)
        config_path = self.path(CONFIG_FILE)
        text = self.stored_config_text()
        if config_path.exists() and manifest.listed():
            if config_path.read_text(encoding="utf-8") != text:
                raise ConfigValidationException(
                    f"{self.root} holds artifacts of a different config; use a fresh output directory"
                )
        else:
            with config_path.open("w", encoding="utf-8", newline="\n") as file_obj:
                file_obj.write(text)
        manifest.config_sha256 = sha256_file(config_path)
        return manifest

    # -----------------------------------------------------------------------------
    # Stage bookkeeping
    # -----------------------------------------------------------------------------

    @contextmanager
    def stage(self, name: str) -> Iterator[StageWriter]:
        """Run one stage; on success its files, timestamps and duration are recorded."""
        manifest = self.bind_config()
        writer = StageWriter(self, name)
        started = _utc_now()
        t0 = time.perf_counter()
        self.logger.info("=" * 70)
        self.logger.info("STAGE %s: START", name.upper())
        yield writer
        duration = time.perf_counter() - t0

        timing_path = self.path(TIMING_FILE)
        timing = read_json(timing_path) if timing_path.exists() else {}
        timing.setdefault("stages", {})[name] = {"seconds": duration}
        write_json(timing_path, timing)

        manifest.record(name, writer.files, started, _utc_now())
        meta_started = manifest.stages["meta"].started if "meta" in manifest.stages else started
        manifest.record("meta", [self.path(CONFIG_FILE), timing_path], meta_started, _utc_now())
        manifest.save()
        self.logger.info("STAGE %s: DONE (%s files, %.1fs)", name.upper(), len(writer.files), duration)
        self.logger.info("=" * 70)

    def require(self, command: str, *relative: str) -> None:
        for rel in relative:
            if not self.path(rel).exists():
                raise DependencyException(f"missing {self.path(rel)}", required_command=command)

    # -----------------------------------------------------------------------------
    # Tasks and seeds
    # -----------------------------------------------------------------------------

    def tasks(self) -> Dict[str, Tuple[TaskSpec, Dataset]]:
        """Every configured task, generated or loaded in config order."""
        if self._tasks is None:
            vocab_size = self.config.model.vocab_size
            loaded: Dict[str, Tuple[TaskSpec, Dataset]] = {}
            for synthetic in self.config.tasks:
                loaded[synthetic.name] = build_synthetic_task(synthetic, vocab_size)
            for jsonl in self.config.jsonl_tasks:
                vocab = load_vocab(jsonl.vocab_path)
                dataset = load_jsonl(jsonl.path, vocab, jsonl.num_classes, vocab_size)
                self._check_input_budget(jsonl.name, dataset)
                loaded[jsonl.name] = (make_task_spec(jsonl.name, jsonl.num_classes, jsonl.family, jsonl.label_words), dataset)
            self._tasks = loaded
        return self._tasks

    def _check_input_budget(self, name: str, dataset: Dataset) -> None:
        """Prompts + MASK + the longest record must fit the model's position table."""
        longest = max(len(sample.tokens) for split in SPLITS for sample in dataset.split(split))
        needed = self.config.tune.num_prompts + 1 + longest
        if needed > self.config.model.max_positions:
            raise ConfigException(
                f"task '{name}': longest record has {longest} tokens; prompts + MASK + input need {needed} positions "
                f"but max_positions={self.config.model.max_positions}"
            )

    def task_names(self) -> List[str]:
        return list(self.tasks())

    def task_seed(self, name: str, purpose: int = 0) -> int:
        return derive_seed(self.config.seed, self.task_names().index(name), purpose)

    # -----------------------------------------------------------------------------
    # Upstream artifacts
    # -----------------------------------------------------------------------------

    def pretrained(self) -> ModelWeights:
        self.require("pretrain", "model/pretrained.bin")
        return load_weights(self.path("model", "pretrained.bin"))

    def random_model(self) -> ModelWeights:
        self.require("pretrain", "model/random_init.bin")
        return load_weights(self.path("model", "random_init.bin"))

    def trial_set(self, name: str) -> TrialSet:
        self.require("tune", f"tune/{name}/trials.json")
        return TrialSet.load(self.path("tune", name))

    def baseline_trials(self, name: str, kind: str) -> TrialSet:
        self.require("tune", f"tune/{name}/baselines/{kind}/trials.json")
        return TrialSet.load(self.path("tune", name, "baselines", kind))

    def bitfit_model(self, name: str) -> ModelWeights:
        self.require("tune", f"tune/{name}/bitfit.bin")
        return load_weights(self.path("tune", name, "bitfit.bin"))

    def adapters(self, name: str) -> AdapterParams:
        self.require("tune", f"tune/{name}/adapters.bin")
        return load_adapters(self.path("tune", name, "adapters.bin"))

    def neuron_set(self, name: str) -> SkillNeuronSet:
        self.require("find", f"find/{name}/skill_neurons.json")
        return SkillNeuronSet.load(self.path("find", name, "skill_neurons.json"))

    def tables(self, name: str) -> Dict[str, PredictivityTable]:
        self.require("find", f"find/{name}/tables")
        return load_tables(self.path("find", name, "tables"))

    def stage_output(self, relative: str) -> Mapping[str, Any]:
        command = PRODUCERS[relative.split("/", 1)[0]]
        self.require(command, relative)
        return read_json(self.path(relative))
