from .config import ExperimentConfig, load_class, load_distribution, trial_rng, trial_seeds
from .experiments import ExperimentReport, run_experiment, summarize
from .report import emit_report

__all__ = ["ExperimentConfig", "ExperimentReport", "emit_report", "load_class", "load_distribution",
           "run_experiment", "summarize", "trial_rng", "trial_seeds"]
