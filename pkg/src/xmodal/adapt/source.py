"""Supervised pretraining of the source encoder and classifier."""

from __future__ import annotations

import numpy as np

from ..forge import DatasetBundle, training_stage
from ..forge.batching import BatchStream
from ..gradcore import OptimState, Tensor, ops, sgd_step
from ..losses import l_self
from ..nets import (
    ArchConfig,
    ClassifierParams,
    EncoderParams,
    forward_classifier,
    forward_encoder,
    init_bundle,
)
from .common import RunState, source_logits
from .config import TrainConfig


class SourceAccuracyError(RuntimeError):
    pass


def holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 0x5EED])
    order = rng.permutation(n)
    n_hold = max(1, int(round(n * fraction)))
    return np.sort(order[n_hold:]), np.sort(order[:n_hold])


def train_source(data: DatasetBundle, cfg: TrainConfig, arch: ArchConfig | None = None,
                 enforce_floor: bool = True):
    """Cross-entropy training on labeled TR source data.

    Returns ``(f_s, c, report)`` where the report holds the holdout accuracy,
    the holdout indices, and the loss history.
    """
    arch = arch or ArchConfig(n_classes=data.n_classes, image_size=data.config.image_size)
    bundle = init_bundle(cfg.seed, arch, data.channel_mean, data.channel_std)
    f_s, c = bundle.f_s, bundle.c
    x, y = data.tr_source.images, data.tr_source.labels
    train_idx, hold_idx = holdout_split(len(x), cfg.holdout_fraction, cfg.seed)
    params = f_s.params() + c.params()
    opt = OptimState(cfg.lr_source, cfg.momentum)
    stream = BatchStream(len(train_idx), cfg.batch_size, np.random.default_rng([cfg.seed, 1]))
    state = RunState("source")
    with training_stage("source"):
        for _ in range(cfg.iterations):
            idx = train_idx[stream.next()]
            probs = ops.softmax(forward_classifier(c, forward_encoder(f_s, Tensor(x[idx]))))
            loss = l_self(probs, y[idx])
            loss.backward()
            sgd_step(params, opt)
            state.log({"l_self": loss, "total": loss})
    acc = accuracy(f_s, c, x[hold_idx], y[hold_idx])
    if enforce_floor and acc < cfg.accuracy_floor:
        raise SourceAccuracyError(
            f"source holdout accuracy {acc:.3f} below floor {cfg.accuracy_floor}; "
            "increase iterations or adjust lr_source")
    report = {"holdout_accuracy": acc, "holdout_indices": hold_idx, "history": state}
    return f_s, c, report


def accuracy(f: EncoderParams, c: ClassifierParams, x: np.ndarray, y: np.ndarray) -> float:
    pred = source_logits(f, c, x).argmax(axis=1)
    return float(np.mean(pred == y))
