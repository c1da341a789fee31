"""Resolved experiment configuration and the staged pipeline behind every method."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..adapt import (
    MissingArtifactError,
    TargetTerms,
    TrainConfig,
    default_config,
    holdout_split,
    run_tgmb,
    teacher_probs,
    train_source,
    train_target_model,
)
from ..adapt.common import METRIC_COLUMNS, RunState
from ..forge import DatasetBundle, GenConfig, generate, load_dataset
from ..losses import LossWeights
from ..nets import ArchConfig, ModelBundle, init_bundle, load_bundle, save_bundle, save_params
from .evaluate import evaluate
from .records import Registry, RunRecord, write_config, write_csv, write_record

METHODS = ("source_only", "shot_like", "socket_like", "tgmb", "tgkt")
_STAGE_KEYS = ("source", "tgmb", "tgkt")
_WEIGHT_KEYS = tuple(f.name for f in fields(LossWeights))


@dataclass(frozen=True)
class BaselineWeights:
    """Term weights of the two desk-scale baseline analogues."""

    shot_im: float = 1.0
    shot_self: float = 0.3
    socket_f: float = 1.0
    socket_im: float = 1.0


def _stage_to_flat(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d.pop("stage")
    d.pop("seed")
    d.update(d.pop("weights"))
    return d


def _stage_from_flat(stage: str, seed: int, flat: dict) -> TrainConfig:
    base = default_config(stage, seed)
    known = {f.name for f in fields(TrainConfig)} - {"stage", "seed", "weights"}
    unknown = set(flat) - known - set(_WEIGHT_KEYS)
    if unknown:
        raise ValueError(f"unknown keys in [{stage}] section: {sorted(unknown)}")
    weights = replace(base.weights, **{k: flat[k] for k in _WEIGHT_KEYS if k in flat})
    return replace(base, weights=weights, **{k: v for k, v in flat.items() if k in known})


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; serializes to a flat, stage-scoped JSON object."""

    method: str = "tgkt"
    seed: int = 0
    data_seed: int | None = None  # None: same as ``seed``
    data: str | None = None  # dataset directory; None: generate from ``gen``
    init_from: str | None = None  # run directory whose trained models seed this run
    gen: GenConfig = field(default_factory=GenConfig)
    source: TrainConfig = field(default_factory=lambda: default_config("source"))
    tgmb: TrainConfig = field(default_factory=lambda: default_config("tgmb"))
    tgkt: TrainConfig = field(default_factory=lambda: default_config("tgkt"))
    baselines: BaselineWeights = field(default_factory=BaselineWeights)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for stage in _STAGE_KEYS:
            cfg = getattr(self, stage)
            if cfg.stage != stage or cfg.seed != self.seed:
                object.__setattr__(self, stage, replace(cfg, stage=stage, seed=self.seed))

    @property
    def effective_data_seed(self) -> int:
        return self.seed if self.data_seed is None else self.data_seed

    @classmethod
    def default(cls, method: str = "tgkt", seed: int = 0) -> "ExperimentConfig":
        return cls(method=method, seed=seed)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "data_seed": self.data_seed,
            "data": self.data,
            "init_from": self.init_from,
            "gen": asdict(self.gen),
            **{stage: _stage_to_flat(getattr(self, stage)) for stage in _STAGE_KEYS},
            "baselines": asdict(self.baselines),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"method", "seed", "data_seed", "data", "init_from", "gen", "baselines", *_STAGE_KEYS}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        seed = int(d.get("seed", 0))
        return cls(
            method=d.get("method", "tgkt"),
            seed=seed,
            data_seed=d.get("data_seed"),
            data=d.get("data"),
            init_from=d.get("init_from"),
            gen=replace(GenConfig(), **d.get("gen", {})),
            baselines=replace(BaselineWeights(), **d.get("baselines", {})),
            **{stage: _stage_from_flat(stage, seed, d.get(stage, {})) for stage in _STAGE_KEYS},
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)

    def with_stage(self, stage: str, **kw) -> "ExperimentConfig":
        """Override fields (loss weights included) of one stage config."""
        cfg = getattr(self, stage)
        wkw = {k: kw.pop(k) for k in list(kw) if k in _WEIGHT_KEYS}
        cfg = replace(cfg, **kw)
        if wkw:
            cfg = cfg.with_weights(**wkw)
        return replace(self, **{stage: cfg})


# ---------------------------------------------------------------------------
# staged execution with an in-process memo, so ablation rows and methods that
# share a prefix (same data, same source config, ...) train it only once


_MEMO: dict[str, object] = {}
_MEMO_LIMIT = 64


def clear_memo() -> None:
    _MEMO.clear()


def _memo(key: str, build):
    if key not in _MEMO:
        if len(_MEMO) >= _MEMO_LIMIT:
            _MEMO.pop(next(iter(_MEMO)))
        _MEMO[key] = build()
    return _MEMO[key]


def _key(*parts) -> str:
    return json.dumps(parts, sort_keys=True, default=str)


def load_data(cfg: ExperimentConfig) -> DatasetBundle:
    if cfg.data is not None:
        return _memo(_key("data", cfg.data), lambda: load_dataset(cfg.data))
    return _memo(_key("gen", cfg.effective_data_seed, asdict(cfg.gen)),
                 lambda: generate(cfg.effective_data_seed, cfg.gen))


@dataclass
class StageResult:
    bundle: ModelBundle
    states: dict[str, RunState]
    accuracies: dict[str, float]
    target_classifier: object = None
    holdout: np.ndarray | None = None


def _source_stage(cfg: ExperimentConfig, data: DatasetBundle):
    key = _key("source", cfg.data, cfg.effective_data_seed, asdict(cfg.gen), asdict(cfg.source))

    def build():
        f_s, c, rep = train_source(data, cfg.source)
        return f_s, c, rep
    return key, _memo(key, build)


def _fresh_bundle(cfg: ExperimentConfig, data: DatasetBundle, f_s, c) -> ModelBundle:
    arch = ArchConfig(n_classes=data.n_classes, image_size=data.config.image_size)
    b = init_bundle(cfg.seed, arch, data.channel_mean, data.channel_std)
    b.f_s, b.c = f_s.clone(), c.clone()
    b.f_t = b.f_s.clone()
    return b


def _tgmb_stage(cfg: ExperimentConfig, data: DatasetBundle, src_key: str, f_s, c):
    key = _key("tgmb", src_key, asdict(cfg.tgmb))

    def build():
        b = _fresh_bundle(cfg, data, f_s, c)
        _, state = run_tgmb(data, b, cfg.tgmb)
        return b, state
    return key, _memo(key, build)


def target_terms(cfg: ExperimentConfig) -> TargetTerms:
    bw = cfg.baselines
    if cfg.method == "tgkt":
        return TargetTerms.from_config(cfg.tgkt)
    if cfg.method == "shot_like":
        return TargetTerms(kd=0.0, f=0.0, self_=bw.shot_self, im=bw.shot_im)
    if cfg.method == "socket_like":
        return TargetTerms(kd=0.0, f=bw.socket_f, self_=0.0, im=bw.socket_im)
    raise ValueError(f"method {cfg.method!r} has no target-model stage")


def _prior(cfg: ExperimentConfig, data: DatasetBundle):
    """Models of an earlier run (``init_from``), with its method name."""
    run_dir = Path(cfg.init_from)
    rec_path = run_dir / "record.json"
    if not rec_path.is_file():
        raise MissingArtifactError(f"init_from {run_dir} holds no completed run")
    method = json.loads(rec_path.read_text(encoding="utf-8"))["method"]
    return _memo(_key("prior", str(run_dir)), lambda: load_bundle(run_dir / "models" / "bundle")), method


def execute(cfg: ExperimentConfig, data: DatasetBundle | None = None) -> StageResult:
    """Run the stages ``cfg.method`` needs and score every applicable mode."""
    data = data if data is not None else load_data(cfg)
    states: dict[str, RunState] = {}
    prior_t = None
    if cfg.init_from is None:
        src_key, (f_s, c, rep) = _source_stage(cfg, data)
        states["source"] = rep["history"]
        hold = rep["holdout_indices"]
    else:
        prior, prior_method = _prior(cfg, data)
        src_key = _key("prior", cfg.init_from)
        f_s, c = prior.f_s, prior.c
        _, hold = holdout_split(len(data.tr_source), cfg.source.holdout_fraction, cfg.seed)
        if prior_method in ("tgmb", "tgkt"):
            prior_t = prior
        elif cfg.method == "tgkt":
            raise MissingArtifactError(
                f"missing translator: {cfg.init_from} is a {prior_method} run; run the tgmb stage first")
    bundle = _fresh_bundle(cfg, data, f_s, c)
    acc = {"source_test": evaluate(bundle, data, "source_test", holdout=hold)}
    if cfg.method == "tgmb" or (cfg.method == "tgkt" and prior_t is None):
        _, (trained, tstate) = _tgmb_stage(cfg, data, src_key, f_s, c)
        states["tgmb"] = tstate
    else:
        trained = prior_t
    if cfg.method in ("tgmb", "tgkt"):
        bundle.t, bundle.d1, bundle.d2 = trained.t.clone(), trained.d1.clone(), trained.d2.clone()
    acc["source_only_target"] = evaluate(bundle, data, "source_only_target")
    if cfg.method in ("tgmb", "tgkt"):
        acc["tgmb_translated"] = evaluate(bundle, data, "tgmb_translated")
    c_t = None
    if cfg.method in ("tgkt", "shot_like", "socket_like"):
        terms = target_terms(cfg)
        teacher = None
        if terms.kd > 0:
            teacher = teacher_probs(bundle, bundle.t, data.tr_target.unlabeled().images)
        _, c_t, kstate = train_target_model(data, bundle, cfg.tgkt, terms, teacher, stage=cfg.method)
        states["tgkt"] = kstate
        acc["target_model"] = evaluate(bundle, data, "target_model", classifier=c_t)
    return StageResult(bundle=bundle, states=states, accuracies=acc,
                       target_classifier=None if cfg.tgkt.classifier_frozen else c_t, holdout=hold)


# ---------------------------------------------------------------------------
# persistence


def persist(result: StageResult, cfg: ExperimentConfig, registry: Registry, tag: str = "") -> RunRecord:
    """Write the run directory; registration in the index is left to the caller."""
    run_id, run_dir = registry.new_run(cfg.method, cfg.seed)
    cfg_dict = cfg.to_dict()
    digest = write_config(run_dir, cfg_dict)
    save_bundle(result.bundle, run_dir / "models" / "bundle")
    if result.target_classifier is not None:
        save_params(result.target_classifier, run_dir / "models" / "target_classifier", "classifier")
    metrics = {}
    for stage, state in result.states.items():
        name = f"metrics_{stage}.csv"
        write_csv(run_dir / name, METRIC_COLUMNS, state.history)
        metrics[stage] = name
    # a run that reuses every stage of an earlier run trains nothing
    last = list(result.states)[-1] if result.states else None
    write_csv(run_dir / "metrics.csv", METRIC_COLUMNS, result.states[last].history if last else [])
    metrics["final"] = "metrics.csv"
    pseudo = result.states.get("tgkt")
    write_csv(run_dir / "pseudo_hist.csv", ("epoch", "label_change_fraction"),
              [] if pseudo is None else pseudo.pseudo_hist)
    rec = RunRecord(run_id=run_id, method=cfg.method, seed=cfg.seed, config=cfg_dict, config_hash=digest,
                    metrics=metrics, accuracies=dict(result.accuracies), tag=tag)
    write_record(run_dir, rec)
    return rec


def run_config(cfg: ExperimentConfig, registry: Registry | None = None, tag: str = "",
               data: DatasetBundle | None = None, register: bool = True) -> RunRecord:
    registry = registry or Registry()
    t0 = time.perf_counter()
    result = execute(cfg, data)
    rec = persist(result, cfg, registry, tag)
    (registry.run_dir(rec.run_id) / "wall_seconds.txt").write_text(f"{time.perf_counter() - t0:.3f}\n")
    if register:
        registry.register(rec)
    return rec


def run_method(method: str, data: DatasetBundle | None = None, seed: int = 0,
               registry: Registry | None = None, base: ExperimentConfig | None = None,
               tag: str = "") -> RunRecord:
    """Full pipeline for one method; the record is persisted and registered."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    cfg = replace(base or ExperimentConfig(), method=method).with_seed(seed)
    if data is not None:
        cfg = replace(cfg, data_seed=data.seed, gen=data.config)
    return run_config(cfg, registry, tag, data)


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
