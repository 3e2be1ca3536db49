"""Single-thread wall-clock timing of full and pruned forwards."""

from __future__ import annotations

import json
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from skillprobe.exception import ConfigException, ProcessingException
from skillprobe.model.transformer import forward
from skillprobe.model.weights import ModelWeights
from skillprobe.utils.logger import logger_service

logger = logger_service.get_pipeline_logger()

ROOT_DIR = Path(__file__).resolve().parents[2]
MIN_REPETITIONS = 30
THREAD_ENV_KEYS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

PathLike = Union[str, Path]


@dataclass
class BenchResult:
    full_median_ms: float
    pruned_median_ms: float
    speedup: float
    repetitions: int
    warmup: int
    batch: int

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def time_forward(
    weights: ModelWeights,
    ids: np.ndarray,
    prompts: Optional[np.ndarray] = None,
    repetitions: int = MIN_REPETITIONS,
    warmup: int = 5,
) -> List[float]:
    """Milliseconds per forward for ``repetitions`` timed runs after ``warmup`` discarded runs."""
    for _ in range(warmup):
        forward(weights, ids, prompts=prompts)
    timings = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        forward(weights, ids, prompts=prompts)
        timings.append((time.perf_counter() - t0) * 1e3)
    return timings


def benchmark(
    full: ModelWeights,
    pruned: ModelWeights,
    ids: np.ndarray,
    prompts: Optional[np.ndarray] = None,
    repetitions: int = MIN_REPETITIONS,
    warmup: int = 5,
) -> BenchResult:
    """Median forward time of both models and the full/pruned speedup."""
    if repetitions < MIN_REPETITIONS:
        raise ConfigException(f"benchmark needs at least {MIN_REPETITIONS} timed repetitions, got {repetitions}")
    full_ms = float(np.median(time_forward(full, ids, prompts, repetitions, warmup)))
    pruned_ms = float(np.median(time_forward(pruned, ids, prompts, repetitions, warmup)))
    result = BenchResult(
        full_median_ms=full_ms,
        pruned_median_ms=pruned_ms,
        speedup=full_ms / pruned_ms if pruned_ms > 0 else float("inf"),
        repetitions=repetitions,
        warmup=warmup,
        batch=int(ids.shape[0]),
    )
    logger.info("full=%.3fms pruned=%.3fms speedup=%.3f (batch=%s, reps=%s)", full_ms, pruned_ms, result.speedup, result.batch, repetitions)
    return result


def single_thread_env() -> Dict[str, str]:
    env = os.environ.copy()
    for key in THREAD_ENV_KEYS:
        env[key] = "1"
    env.setdefault("SKILLPROBE_LOG_TO_FILE", "0")
    return env


def run_isolated(
    full_path: PathLike,
    pruned_path: PathLike,
    ids: np.ndarray,
    prompts_path: Optional[PathLike] = None,
    repetitions: int = MIN_REPETITIONS,
    warmup: int = 5,
    timeout: float = 1800.0,
) -> BenchResult:
    """Run ``benchmark`` in a fresh interpreter with every BLAS pool pinned to one thread."""
    with tempfile.TemporaryDirectory(prefix="skillprobe-bench-") as tmp:
        inputs = Path(tmp) / "inputs.npy"
        result_path = Path(tmp) / "result.json"
        np.save(inputs, np.asarray(ids, dtype=np.int64))
        cmd = [
            sys.executable,
            "-m",
            "skillprobe.compress.bench_worker",
            "--full",
            str(full_path),
            "--pruned",
            str(pruned_path),
            "--inputs",
            str(inputs),
            "--repetitions",
            str(repetitions),
            "--warmup",
            str(warmup),
            "--out",
            str(result_path),
        ]
        if prompts_path is not None:
            cmd += ["--prompts", str(prompts_path)]
        logger.info("launching single-thread benchmark worker")
        proc = subprocess.run(cmd, cwd=str(ROOT_DIR), env=single_thread_env(), capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0:
            raise ProcessingException(f"benchmark worker failed (exit={proc.returncode}): {proc.stderr.strip()[-2000:]}")
        data = json.loads(result_path.read_text(encoding="utf-8"))
    return BenchResult(**data)
