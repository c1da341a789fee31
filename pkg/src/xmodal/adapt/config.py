from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from ..losses import LossWeights

STAGES = ("source", "tgmb", "tgkt")


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "tgmb"
    iterations: int = 400
    batch_size: int = 32
    lr_translator: float = 3e-4
    lr_discriminator: float = 0.01
    lr_target: float = 0.01
    lr_source: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    # translator-side adversarial terms; ablations switch them off one by one
    use_d1: bool = True
    use_d2: bool = True
    d2_push: str = "ti"  # "ti" or "symmetric"
    pseudo_label_refresh_interval: int = 0  # 0 = once per epoch of the TR target set
    self_warmup_epochs: int = 0
    kd_direction: str = "student_teacher"
    classifier_frozen: bool = True
    holdout_fraction: float = 0.1
    accuracy_floor: float = 0.95

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        for name in ("lr_translator", "lr_discriminator", "lr_target", "lr_source"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d2_push not in ("ti", "symmetric"):
            raise ValueError(f"d2_push must be 'ti' or 'symmetric', got {self.d2_push!r}")
        if self.kd_direction not in ("student_teacher", "teacher_student"):
            raise ValueError(f"unknown kd_direction {self.kd_direction!r}")
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights(**d["weights"])
        return cls(**d)

    def with_weights(self, **kw) -> "TrainConfig":
        return replace(self, weights=replace(self.weights, **kw))


def default_config(stage: str, seed: int = 0) -> TrainConfig:
    if stage == "source":
        return TrainConfig(stage="source", iterations=600, batch_size=32, seed=seed)
    if stage == "tgmb":
        return TrainConfig(stage="tgmb", iterations=800, batch_size=32, seed=seed)
    if stage == "tgkt":
        return TrainConfig(stage="tgkt", iterations=400, batch_size=32, seed=seed)
    raise ValueError(f"unknown stage {stage!r}")
