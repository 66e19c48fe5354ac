"""Experiment harness: configs, sweeps, CSV output, fits and figures."""
from .analysis import AnalysisResult, analyze, floor_ratio, geometric_rate, granularity_slope
from .config import ExperimentConfig, RunSpec, dump, load, load_str
from .experiments import ExperimentOutput, cell_seed, run_experiment
