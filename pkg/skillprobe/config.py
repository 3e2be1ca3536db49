"""
Configuration classes for skillprobe experiments
Supports YAML, JSON, and programmatic configuration
"""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from skillprobe.exception import ConfigException

# Reserved vocabulary layout shared by the synthetic generators and the model.
PAD_ID = 0
MASK_ID = 1
UNK_ID = 2
LABEL_WORD_START = 3
LABEL_WORD_END = 11  # exclusive
CUE_START = 16
CUE_CLASSES = 4
CUE_TOKENS_PER_CLASS = 6
FAMILIES = ("polarity", "inference", "topic")
FILLER_START = CUE_START + len(FAMILIES) * CUE_CLASSES * CUE_TOKENS_PER_CLASS
SYNTHETIC_MAX_LENGTH = 32


def _pick(cls, data: Optional[Dict[str, Any]]):
    """Build a dataclass from a mapping, ignoring unknown keys."""
    if not data:
        return cls()
    return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class ModelConfig:
    """Toy Transformer encoder shape"""

    num_layers: int = 4
    d: int = 64
    d_m: int = 256
    num_heads: int = 4
    vocab_size: int = 512
    max_positions: int = 160
    activation: str = "gelu"  # gelu, relu

    @property
    def head_dim(self) -> int:
        return self.d // self.num_heads

    def validate(self) -> None:
        if self.d % self.num_heads != 0:
            raise ConfigException(f"d={self.d} is not divisible by num_heads={self.num_heads}")
        if self.d_m < self.d:
            raise ConfigException(f"d_m={self.d_m} must be >= d={self.d}")
        if self.activation not in {"gelu", "relu"}:
            raise ConfigException(f"Unsupported activation: {self.activation}")
        if min(self.num_layers, self.vocab_size, self.max_positions) <= 0:
            raise ConfigException("num_layers, vocab_size and max_positions must be positive")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ModelConfig":
        return _pick(cls, data)


@dataclass
class PretrainConfig:
    """Masked-LM pre-training of the toy model"""

    steps: int = 3000
    batch_size: int = 16
    learning_rate: float = 0.001
    mask_rate: float = 0.15
    log_interval: int = 250

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "PretrainConfig":
        return _pick(cls, data)


@dataclass
class TuneConfig:
    """Hyperparameters shared by prompt tuning, BitFit and adapter tuning"""

    learning_rate: float = 0.001
    batch_size: int = 8
    eval_interval: int = 100
    patience: int = 6
    prompt_init_std: float = 0.03
    max_steps: int = 3000
    num_prompts: int = 16
    trials: int = 5
    adapter_bottleneck: int = 8
    # BitFit/adapter regimes usually need a larger step than prompt tuning
    regime_learning_rate: Optional[float] = None

    def validate(self) -> None:
        positives = {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "eval_interval": self.eval_interval,
            "prompt_init_std": self.prompt_init_std,
            "max_steps": self.max_steps,
            "num_prompts": self.num_prompts,
            "trials": self.trials,
            "adapter_bottleneck": self.adapter_bottleneck,
        }
        for name, value in positives.items():
            if value is None or value <= 0:
                raise ConfigException(f"tune.{name} must be positive, got {value}")
        if self.patience < 1:
            raise ConfigException(f"tune.patience must be >= 1, got {self.patience}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "TuneConfig":
        return _pick(cls, data)


@dataclass
class SyntheticTaskConfig:
    """One synthetic classification task of a cue-token family"""

    name: str
    family: str = "polarity"  # polarity, inference, topic
    num_classes: int = 2
    size: int = 1000
    noise: float = 0.05
    variant: int = 0
    seed: int = 0
    label_words: Optional[List[int]] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SyntheticTaskConfig":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class JsonlTaskConfig:
    """A small real dataset ingested from JSONL plus a vocab file"""

    name: str
    path: str
    vocab_path: str
    num_classes: int = 2
    family: str = "external"
    label_words: Optional[List[int]] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "JsonlTaskConfig":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class FindConfig:
    """Skill-neuron finding options"""

    top_k: int = 100
    aggregator: str = "max"  # max, mean
    polarity: str = "both"  # both, positive
    token_source: str = "prompt"  # prompt, input_mean, input_max
    histogram_bins: int = 20
    probe_steps: int = 500
    probe_learning_rate: float = 0.5
    batch_size: int = 64

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "FindConfig":
        return _pick(cls, data)


@dataclass
class PerturbationConfig:
    """Gaussian activation perturbation options"""

    mu: float = 0.0
    sigma: float = 0.1
    fractions: List[float] = field(default_factory=lambda: [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0])
    trials: int = 5
    split: str = "test"
    regime_fraction: float = 0.05

    def validate(self) -> None:
        grid = list(self.fractions)
        if not grid or grid[0] != 0.0:
            raise ConfigException("perturbation.fractions must start at 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigException("perturbation.fractions must be strictly ascending")
        if grid[-1] > 1.0:
            raise ConfigException("perturbation.fractions must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "PerturbationConfig":
        return _pick(cls, data)


@dataclass
class WordsConfig:
    """Related-word inspection and label-word robustness"""

    k: int = 10
    neurons: int = 3
    label_word_draws: int = 5
    robustness_task: Optional[str] = None
    robustness_trials: Optional[int] = None  # None: tune.trials

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "WordsConfig":
        return _pick(cls, data)


@dataclass
class PruneConfig:
    """Skill-neuron-guided pruning and benchmarking"""

    keep_fraction: float = 0.02
    layer_fraction: float = 0.75
    clamp_mode: str = "mean_tokens"  # mean_tokens, best_token
    tasks: Optional[List[str]] = None
    bench_batch: int = 8
    bench_repetitions: int = 30
    bench_warmup: int = 5

    def validate(self) -> None:
        if not 0.0 < self.keep_fraction < 1.0:
            raise ConfigException(f"prune.keep_fraction must lie in (0, 1), got {self.keep_fraction}")
        if not 0.0 <= self.layer_fraction <= 1.0:
            raise ConfigException(f"prune.layer_fraction must lie in [0, 1], got {self.layer_fraction}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "PruneConfig":
        return _pick(cls, data)


@dataclass
class TransferConfig:
    """ON transferability indicator"""

    mask_fraction: float = 0.2
    threshold: float = 0.0
    reference_split: str = "dev"

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "TransferConfig":
        return _pick(cls, data)


def default_task_suite() -> List[SyntheticTaskConfig]:
    """The bundled 4-task suite: two polarity variants, one inference task, one 3-class task."""
    return [
        SyntheticTaskConfig(name="polarity_a", family="polarity", num_classes=2, variant=0, seed=11),
        SyntheticTaskConfig(name="polarity_b", family="polarity", num_classes=2, variant=1, seed=12),
        SyntheticTaskConfig(name="inference", family="inference", num_classes=2, variant=0, seed=13),
        SyntheticTaskConfig(name="polarity_3way", family="polarity", num_classes=3, variant=2, seed=14),
    ]


@dataclass
class ExperimentConfig:
    """Main configuration for a skillprobe experiment"""

    config_name: str = "default"
    seed: int = 0
    output_dir: str = "output"
    threads: Optional[int] = None
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    tune: TuneConfig = field(default_factory=TuneConfig)
    tasks: List[SyntheticTaskConfig] = field(default_factory=default_task_suite)
    jsonl_tasks: List[JsonlTaskConfig] = field(default_factory=list)
    find: FindConfig = field(default_factory=FindConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    words: WordsConfig = field(default_factory=WordsConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def task_names(self) -> List[str]:
        return [task.name for task in self.tasks] + [task.name for task in self.jsonl_tasks]

    def resolve_output_dir(self) -> Path:
        """SKILLPROBE_OUT overrides the configured output directory."""
        env_out = os.getenv("SKILLPROBE_OUT", "").strip()
        return Path(env_out or self.output_dir)

    def validate(self) -> None:
        self.model.validate()
        self.tune.validate()
        self.perturbation.validate()
        self.prune.validate()
        names = self.task_names
        if not names:
            raise ConfigException("At least one task is required")
        if len(set(names)) != len(names):
            raise ConfigException(f"Task names must be unique: {names}")
        needed = self.tune.num_prompts + 1 + SYNTHETIC_MAX_LENGTH
        if self.tasks and needed > self.model.max_positions:
            raise ConfigException(
                f"max_positions={self.model.max_positions} is below prompts + MASK + longest input ({needed})"
            )
        for jsonl in self.jsonl_tasks:
            for path in (jsonl.path, jsonl.vocab_path):
                if not Path(path).exists():
                    raise ConfigException(f"Task '{jsonl.name}' references missing file: {path}")

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dict"""
        return asdict(self)

    def to_yaml_str(self) -> str:
        """Convert to YAML string"""
        return yaml.safe_dump(self.to_dict(), default_flow_style=False, allow_unicode=True, sort_keys=False)

    def to_json_str(self) -> str:
        """Convert to JSON string"""
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def save_yaml(self, path: str) -> None:
        """Save to YAML file"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_yaml_str(), encoding="utf-8")

    @classmethod
    def from_yaml(cls, path: str) -> "ExperimentConfig":
        """Load from YAML file"""
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if isinstance(data, dict) and not data.get("config_name"):
            data["config_name"] = Path(path).stem
        return cls.from_dict(data)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        """Load from JSON file"""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, dict) and not data.get("config_name"):
            data["config_name"] = Path(path).stem
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Create from dict; unknown keys are ignored, missing sections take defaults"""
        raw_tasks = data.get("tasks")
        tasks = (
            [SyntheticTaskConfig.from_dict(item) for item in raw_tasks if isinstance(item, dict)]
            if raw_tasks is not None
            else default_task_suite()
        )
        jsonl_tasks = [JsonlTaskConfig.from_dict(item) for item in data.get("jsonl_tasks") or [] if isinstance(item, dict)]

        return cls(
            config_name=data.get("config_name", "default"),
            seed=int(data.get("seed", 0)),
            output_dir=str(data.get("output_dir", "output")),
            threads=data.get("threads"),
            model=ModelConfig.from_dict(data.get("model")),
            pretrain=PretrainConfig.from_dict(data.get("pretrain")),
            tune=TuneConfig.from_dict(data.get("tune")),
            tasks=tasks,
            jsonl_tasks=jsonl_tasks,
            find=FindConfig.from_dict(data.get("find")),
            perturbation=PerturbationConfig.from_dict(data.get("perturbation")),
            words=WordsConfig.from_dict(data.get("words")),
            prune=PruneConfig.from_dict(data.get("prune")),
            transfer=TransferConfig.from_dict(data.get("transfer")),
            metadata=data.get("metadata") or {},
        )
