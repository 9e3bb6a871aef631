"""Experiment configuration, orchestration, ingestion, figure data, and the CLI."""
from .config import ExperimentConfig, apply_preset
from .experiment import ExperimentResult, factor_configs, run_experiment
from .figures import generate_figure_data
from .ingest import UnlabeledSet, ingest_unlabeled_csv

__all__ = ["ExperimentConfig", "ExperimentResult", "UnlabeledSet", "apply_preset",
           "factor_configs", "generate_figure_data", "ingest_unlabeled_csv", "run_experiment"]
