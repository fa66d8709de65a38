"""Dataset generation, benchmarking, reporting and the command line."""

from .bench import run_bench, summarize, write_bench_outputs
from .config import ConfigError, ExperimentConfig, build_strategy, load_config, preset
from .dataset import Dataset, DatasetError, generate_dataset, load_dataset

__all__ = [
    "run_bench", "summarize", "write_bench_outputs",
    "ConfigError", "ExperimentConfig", "build_strategy", "load_config", "preset",
    "Dataset", "DatasetError", "generate_dataset", "load_dataset",
]
