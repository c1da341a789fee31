from .common import METRIC_COLUMNS, NonFiniteLoss, RunState
from .config import TrainConfig, default_config
from .pseudo import PseudoLabels, pseudo_label
from .source import SourceAccuracyError, accuracy, holdout_split, train_source
from .tgkt import MissingArtifactError, TargetTerms, run_tgkt, teacher_probs, train_target_model
from .tgmb import run_tgmb

__all__ = [
    "METRIC_COLUMNS", "MissingArtifactError", "NonFiniteLoss", "PseudoLabels", "RunState",
    "SourceAccuracyError", "TargetTerms", "TrainConfig", "accuracy", "default_config", "holdout_split",
    "pseudo_label", "run_tgkt", "run_tgmb", "teacher_probs", "train_source", "train_target_model",
]
