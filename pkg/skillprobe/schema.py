"""
Pydantic models validating raw experiment config files before any compute
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from skillprobe.exception import ConfigValidationException

# ===== Model =====


class ModelSchema(BaseModel):
    num_layers: int = Field(4, ge=1, le=48)
    d: int = Field(64, ge=2)
    d_m: int = Field(256, ge=2)
    num_heads: int = Field(4, ge=1)
    vocab_size: int = Field(512, ge=16)
    max_positions: int = Field(160, ge=2)
    activation: Literal["gelu", "relu"] = "gelu"

    @model_validator(mode="after")
    def _check_shapes(self) -> "ModelSchema":
        if self.d % self.num_heads != 0:
            raise ValueError(f"d={self.d} must be divisible by num_heads={self.num_heads}")
        if self.d_m < self.d:
            raise ValueError(f"d_m={self.d_m} must be >= d={self.d}")
        return self


# ===== Training =====


class PretrainSchema(BaseModel):
    steps: int = Field(3000, ge=0)
    batch_size: int = Field(16, ge=1)
    learning_rate: float = Field(0.001, gt=0.0)
    mask_rate: float = Field(0.15, gt=0.0, lt=1.0)
    log_interval: int = Field(250, ge=1)


class TuneSchema(BaseModel):
    learning_rate: float = Field(0.001, gt=0.0)
    batch_size: int = Field(8, ge=1)
    eval_interval: int = Field(100, ge=1)
    patience: int = Field(6, ge=1)
    prompt_init_std: float = Field(0.03, gt=0.0)
    max_steps: int = Field(3000, ge=1)
    num_prompts: int = Field(16, ge=1)
    trials: int = Field(5, ge=1)
    adapter_bottleneck: int = Field(8, ge=1)
    regime_learning_rate: Optional[float] = Field(None, gt=0.0)


# ===== Tasks =====


class SyntheticTaskSchema(BaseModel):
    name: str = Field(..., min_length=1)
    family: Literal["polarity", "inference", "topic"] = "polarity"
    num_classes: int = Field(2, ge=2, le=4)
    size: int = Field(1000, ge=60)
    noise: float = Field(0.05, ge=0.0, lt=0.5)
    variant: int = Field(0, ge=0, le=2)
    seed: int = 0
    label_words: Optional[List[int]] = None


class JsonlTaskSchema(BaseModel):
    name: str = Field(..., min_length=1)
    path: str
    vocab_path: str
    num_classes: int = Field(2, ge=2)
    family: str = "external"
    label_words: Optional[List[int]] = None


# ===== Analysis =====


class FindSchema(BaseModel):
    top_k: int = Field(100, ge=1)
    aggregator: Literal["max", "mean"] = "max"
    polarity: Literal["both", "positive"] = "both"
    token_source: Literal["prompt", "input_mean", "input_max"] = "prompt"
    histogram_bins: int = Field(20, ge=2)
    probe_steps: int = Field(500, ge=1)
    probe_learning_rate: float = Field(0.5, gt=0.0)
    batch_size: int = Field(64, ge=1)


class PerturbationSchema(BaseModel):
    mu: float = 0.0
    sigma: float = Field(0.1, ge=0.0)
    fractions: List[float] = Field(default_factory=lambda: [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0])
    trials: int = Field(5, ge=1)
    split: Literal["dev", "test"] = "test"
    regime_fraction: float = Field(0.05, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_grid(self) -> "PerturbationSchema":
        grid = self.fractions
        if not grid or grid[0] != 0.0:
            raise ValueError("fractions must start at 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("fractions must be strictly ascending")
        if grid[-1] > 1.0:
            raise ValueError("fractions must lie in [0, 1]")
        return self


class WordsSchema(BaseModel):
    k: int = Field(10, ge=1)
    neurons: int = Field(3, ge=1)
    label_word_draws: int = Field(5, ge=2)
    robustness_task: Optional[str] = None
    robustness_trials: Optional[int] = Field(None, ge=1)


class PruneSchema(BaseModel):
    keep_fraction: float = Field(0.02, gt=0.0, lt=1.0)
    layer_fraction: float = Field(0.75, ge=0.0, le=1.0)
    clamp_mode: Literal["mean_tokens", "best_token"] = "mean_tokens"
    tasks: Optional[List[str]] = None
    bench_batch: int = Field(8, ge=1)
    bench_repetitions: int = Field(30, ge=30)
    bench_warmup: int = Field(5, ge=0)


class TransferSchema(BaseModel):
    mask_fraction: float = Field(0.2, gt=0.0, le=1.0)
    threshold: float = 0.0
    reference_split: Literal["train", "dev", "test"] = "dev"


# ===== Full Config =====


class ExperimentSchema(BaseModel):
    """Complete skillprobe experiment configuration"""

    config_name: str = "default"
    seed: int = 0
    output_dir: str = "output"
    threads: Optional[int] = Field(None, ge=1)
    model: ModelSchema = Field(default_factory=ModelSchema)
    pretrain: PretrainSchema = Field(default_factory=PretrainSchema)
    tune: TuneSchema = Field(default_factory=TuneSchema)
    tasks: Optional[List[SyntheticTaskSchema]] = None
    jsonl_tasks: List[JsonlTaskSchema] = Field(default_factory=list)
    find: FindSchema = Field(default_factory=FindSchema)
    perturbation: PerturbationSchema = Field(default_factory=PerturbationSchema)
    words: WordsSchema = Field(default_factory=WordsSchema)
    prune: PruneSchema = Field(default_factory=PruneSchema)
    transfer: TransferSchema = Field(default_factory=TransferSchema)
    metadata: dict = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_tasks(self) -> "ExperimentSchema":
        names = [task.name for task in self.tasks or []] + [task.name for task in self.jsonl_tasks]
        if len(set(names)) != len(names):
            raise ValueError(f"task names must be unique: {names}")
        return self


def validate_config_dict(data: Dict[str, Any]) -> ExperimentSchema:
    """Validate a raw config mapping, raising ConfigValidationException with every issue listed."""
    if not isinstance(data, dict):
        raise ConfigValidationException(f"Config root must be a mapping, got {type(data).__name__}")
    try:
        return ExperimentSchema.model_validate(data)
    except ValidationError as exc:
        issues = "; ".join(f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors())
        raise ConfigValidationException(f"Invalid config: {issues}") from exc
