"""Dataset-level orchestration, metrics, synthetic data and the CLI."""
from .config import RunConfig, load_config, parse_config_text
from .metrics import EvalReport, average_precision, confusion_matrix
from .runs import (compare_temporal, ensure_codebook, prepare, run_extract, run_train_eval,
                   stratified_split, sweep_ratio)
from .synth import ClassSpec, SynthSpec, generate_dataset, preset

__all__ = ["RunConfig", "load_config", "parse_config_text", "EvalReport", "average_precision",
           "confusion_matrix", "compare_temporal", "ensure_codebook", "prepare", "run_extract",
           "run_train_eval", "stratified_split", "sweep_ratio", "ClassSpec", "SynthSpec",
           "generate_dataset", "preset"]
