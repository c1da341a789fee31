from .evaluate import MODES, evaluate
from .experiment import METHODS, BaselineWeights, ExperimentConfig, execute, load_config, run_config, run_method
from .grids import (
    SWEEP_GRIDS,
    AblationSpec,
    EmptySeedsError,
    SweepSpec,
    TableResult,
    run_ablation,
    run_jobs,
    run_sweep,
)
from .records import ACCURACY_KEYS, Registry, RunRecord
from .report import render, report

__all__ = [
    "ACCURACY_KEYS", "METHODS", "MODES", "SWEEP_GRIDS", "AblationSpec", "BaselineWeights", "EmptySeedsError",
    "ExperimentConfig", "Registry", "RunRecord", "SweepSpec", "TableResult", "evaluate", "execute",
    "load_config", "render", "report", "run_ablation", "run_config", "run_jobs", "run_method", "run_sweep",
]
