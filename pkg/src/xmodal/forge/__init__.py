from .batching import BatchStream, batches, epoch_indices
from .calibrate import DEFAULT_GAMMAS, GapReport, GapUnreachableError, calibrate_gap, gap_band
from .generate import (
    FAMILIES,
    DatasetBundle,
    GenConfig,
    LabeledSplit,
    PairedSplit,
    SceneSpec,
    TargetSplit,
    UnlabeledView,
    generate,
    load_dataset,
    replicate_channels,
    save_dataset,
)
from .hygiene import LabelAccessError, evaluation, training_stage
from .pack import PackError, read_pack, write_pack

__all__ = [
    "DEFAULT_GAMMAS", "GapReport", "GapUnreachableError", "calibrate_gap", "gap_band",
    "FAMILIES", "BatchStream", "DatasetBundle", "GenConfig", "LabelAccessError", "LabeledSplit",
    "PackError", "PairedSplit", "SceneSpec", "TargetSplit", "UnlabeledView", "batches",
    "epoch_indices", "evaluation", "generate", "load_dataset", "read_pack", "replicate_channels",
    "save_dataset", "training_stage", "write_pack",
]
