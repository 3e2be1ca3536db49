"""
skillprobe - Main Entry Point
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

ROOT_DIR = Path(__file__).resolve().parents[2]

# Ensure project root is in path for imports
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from skillprobe import __version__ as skillprobe_version  # noqa: E402
from skillprobe.config import ExperimentConfig  # noqa: E402
from skillprobe.exception import (  # noqa: E402
    ConfigException,
    ConfigValidationException,
    DependencyException,
    ValidationException,
)
from skillprobe.pipeline import STAGES, Experiment, run_all  # noqa: E402
from skillprobe.pipeline.manifest import LOG_DIR  # noqa: E402
from skillprobe.schema import validate_config_dict  # noqa: E402
from skillprobe.utils.logger import logger_service  # noqa: E402
from skillprobe.utils.workers import resolve_worker_count  # noqa: E402

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_DEPENDENCY = 2


def load_raw_config(config_path: Path) -> Dict[str, Any]:
    if config_path.suffix in (".yaml", ".yml"):
        data = yaml.safe_load(config_path.read_text(encoding="utf-8"))
    elif config_path.suffix == ".json":
        data = json.loads(config_path.read_text(encoding="utf-8"))
    else:
        raise ConfigValidationException(f"Unsupported config format: {config_path.suffix}")
    data = {} if data is None else data
    if isinstance(data, dict) and not data.get("config_name"):
        data["config_name"] = config_path.stem
    return data


def load_config(config_path: Optional[str], args: argparse.Namespace, logger) -> ExperimentConfig:
    """Validated config with command-line overrides applied; raises before any compute."""
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ConfigValidationException(f"Config file not found: {path.absolute()}")
        logger.info(f"Config file found: {path.absolute()}")
        logger.info(f"  - File size: {path.stat().st_size} bytes")
        raw = load_raw_config(path)
    else:
        logger.info("No --config given, using the bundled default suite")
        raw = ExperimentConfig().to_dict()

    validate_config_dict(raw)
    config = ExperimentConfig.from_dict(raw)
    apply_overrides(config, args)
    config.validate()

    logger.info("Config parsed successfully")
    logger.info(f"  - Config name: {config.config_name}")
    logger.info(f"  - Seed       : {config.seed}")
    logger.info(f"  - Tasks      : {', '.join(config.task_names)}")
    logger.info(
        f"  - Model      : layers={config.model.num_layers} d={config.model.d} d_m={config.model.d_m} vocab={config.model.vocab_size}"
    )
    return config


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> None:
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "trials", None) is not None:
        config.tune.trials = args.trials
    if getattr(args, "max_steps", None) is not None:
        config.tune.max_steps = args.max_steps
    if getattr(args, "pretrain_steps", None) is not None:
        config.pretrain.steps = args.pretrain_steps


def resolve_workers(args: argparse.Namespace, config: ExperimentConfig) -> int:
    """--threads, then SKILLPROBE_THREADS, then the config file."""
    if getattr(args, "threads", None):
        return resolve_worker_count(args.threads)
    if os.getenv("SKILLPROBE_THREADS", "").strip():
        return resolve_worker_count(None)
    return resolve_worker_count(config.threads)


def resolve_root(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    return Path(args.out) if getattr(args, "out", None) else config.resolve_output_dir()


def validate_config(config_path: Optional[str], args: argparse.Namespace, logger) -> bool:
    """Validate and log config file"""
    logger.info("=" * 70)
    logger.info("CONFIG VALIDATION")
    logger.info("=" * 70)
    try:
        load_config(config_path, args, logger)
    except ConfigException as exc:
        logger.error(f"Invalid config: {exc}")
        logger.info("=" * 70)
        return False
    logger.info("=" * 70)
    return True


def create_sample_config() -> ExperimentConfig:
    """Create sample configuration"""
    return ExperimentConfig(
        config_name="sample_config",
        metadata={"description": "bundled 4-task synthetic suite"},
    )


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Config file path (YAML or JSON)")
    common.add_argument("--out", type=str, help="Experiment directory (overrides SKILLPROBE_OUT and output_dir)")
    common.add_argument("--threads", type=int, help="Worker cap (overrides SKILLPROBE_THREADS and threads)")
    common.add_argument("--seed", type=int, help="Experiment seed")
    common.add_argument("--trials", type=int, help="Prompt-tuning trials per task")
    common.add_argument("--max-steps", dest="max_steps", type=int, help="Tuning step cap")
    common.add_argument("--pretrain-steps", dest="pretrain_steps", type=int, help="MLM pre-training steps")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillprobe", description="Skill-neuron laboratory for a desk-scale Transformer")
    parser.add_argument("--version", action="version", version=f"skillprobe {skillprobe_version}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_arguments()

    helps = {
        "pretrain": "Masked-LM pre-training of the toy encoder",
        "tune": "Prompt tuning trials, BitFit, adapters and untrained prompt baselines",
        "find": "Predictivity tables and skill neurons",
        "perturb": "Perturbation curves and neuronal importance",
        "correlate": "Spearman correlation of neuron predictivity across tasks",
        "words": "Related words and label-word robustness",
        "prune": "Skill-neuron pruning with bias folding",
        "bench": "Single-thread timing of full vs pruned models",
        "transfer": "Prompt transferability indicator",
        "report": "Collate every stage into report/summary.json",
    }
    for name in STAGES:
        subparsers.add_parser(name, parents=[common], help=helps[name])

    run = subparsers.add_parser("run", parents=[common], help="Every stage in order")
    run.add_argument("--skip", nargs="*", default=[], choices=list(STAGES), help="Stages to leave out")

    subparsers.add_parser("validate", parents=[common], help="Validate a config and exit")
    sample = subparsers.add_parser("sample-config", help="Write the default config")
    sample.add_argument("--output", type=str, default="sample_config.yaml", help="Destination YAML path")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logger = logger_service.get_pipeline_logger()

    if args.command == "sample-config":
        config = create_sample_config()
        config.save_yaml(args.output)
        logger.info(f"Sample config generated: {args.output}")
        return EXIT_OK

    if args.command == "validate":
        return EXIT_OK if validate_config(args.config, args, logger) else EXIT_DEPENDENCY

    try:
        logger.info("\n" + "=" * 70)
        logger.info("SKILLPROBE: STARTUP")
        logger.info("=" * 70)
        logger.info(f"Working dir : {os.getcwd()}")
        logger.info(f"Python      : {sys.version.split()[0]}")
        logger.info(f"Version     : {skillprobe_version}")
        logger.info(f"Command     : {args.command}")
        logger.info("=" * 70 + "\n")

        logger.info("STEP 1/2 - Loading configuration...")
        config = load_config(args.config, args, logger)
        root = resolve_root(args, config)
        logger_service.use_log_dir(root / LOG_DIR)
        experiment = Experiment(config, root=root, workers=resolve_workers(args, config))
        experiment.bind_config()
        experiment.tasks()
        logger.info(f"STEP 1/2 - CONFIG OK (experiment dir {root}, workers={experiment.workers})")

        logger.info("STEP 2/2 - Running %s", args.command)
        if args.command == "run":
            run_all(experiment, skip=args.skip)
        else:
            STAGES[args.command](experiment)

        logger.info("\n" + "=" * 70)
        logger.info("SKILLPROBE: %s COMPLETED SUCCESSFULLY", args.command.upper())
        logger.info("=" * 70 + "\n")
        return EXIT_OK

    except (DependencyException, ConfigException, ValidationException) as exc:
        logger.error(str(exc))
        logger.info("=" * 70 + "\n")
        return EXIT_DEPENDENCY
    except KeyboardInterrupt:
        logger.warning("Interrupted; stage outputs of the running command are incomplete")
        logger.info("=" * 70 + "\n")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        logger.info("=" * 70 + "\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
