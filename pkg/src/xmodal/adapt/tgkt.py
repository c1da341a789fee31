"""Target-model training: distillation, TI feature matching, pseudo-label self-training.

The same loop also drives the desk-scale baselines (information
maximization with pseudo labels; feature matching with information
maximization) by switching terms on and off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..forge import DatasetBundle, training_stage
from ..forge.batching import BatchStream
from ..gradcore import OptimState, Tensor, no_grad, ops, sgd_step
from ..losses import LossWeights, l_f, l_im, l_kd, l_self, l_tgkt
from ..nets import (
    ClassifierParams,
    EncoderParams,
    ModelBundle,
    TranslatorParams,
    forward_classifier,
    forward_encoder,
    single_channel_encoder,
)
from .common import RunState, check_finite, frozen_features, full_batch_features, softmax_np, source_logits, translate
from .config import TrainConfig
from .pseudo import pseudo_label


class MissingArtifactError(RuntimeError):
    pass


@dataclass(frozen=True)
class TargetTerms:
    """Which terms drive the target model, with their weights."""

    kd: float = 1.0
    f: float = 0.2
    self_: float = 1.0
    im: float = 0.0

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "TargetTerms":
        return cls(kd=1.0, f=cfg.weights.beta_f, self_=cfg.weights.beta_self, im=0.0)


def teacher_probs(bundle: ModelBundle, translator: TranslatorParams, x_t: np.ndarray) -> np.ndarray:
    """Source-model predictions on translated target images (constants for the student)."""
    return softmax_np(source_logits(bundle.f_s, bundle.c, translate(translator, x_t)))


def train_target_model(data: DatasetBundle, bundle: ModelBundle, cfg: TrainConfig, terms: TargetTerms,
                       teacher: np.ndarray | None, stage: str = "tgkt"):
    """Shared loop; returns ``(f_t, c_t, state)``."""
    if terms.kd > 0 and teacher is None:
        raise MissingArtifactError("distillation requested but no teacher predictions (translator missing)")
    for part in (bundle.f_s, bundle.c, bundle.t):
        part.requires_grad_(False)
    f_t = single_channel_encoder(bundle.f_s, data.channel_mean, data.channel_std)
    bundle.f_t = f_t
    c_t: ClassifierParams = bundle.c if cfg.classifier_frozen else bundle.c.clone().requires_grad_(True)
    params = f_t.params() + ([] if cfg.classifier_frozen else c_t.params())

    x_t = data.tr_target.unlabeled().images
    ti = data.ti_pairs
    f_ti_s_all = frozen_features(bundle.f_s, ti.source) if terms.f > 0 else None
    opt = OptimState(cfg.lr_target, cfg.momentum)
    tr_stream = BatchStream(len(x_t), cfg.batch_size, np.random.default_rng([cfg.seed, 4]))
    ti_stream = BatchStream(len(ti), cfg.batch_size, np.random.default_rng([cfg.seed, 5]))
    refresh = cfg.pseudo_label_refresh_interval or tr_stream.batches_per_epoch
    warmup_iters = cfg.self_warmup_epochs * tr_stream.batches_per_epoch
    pseudo = None
    state = RunState(stage)
    with training_stage(stage):
        for it in range(cfg.iterations):
            if terms.self_ > 0 and it >= warmup_iters and (it - warmup_iters) % refresh == 0:
                new = _refresh_pseudo(f_t, c_t, x_t)
                changed = 1.0 if pseudo is None else float(np.mean(new != pseudo))
                state.pseudo_hist.append((it // tr_stream.batches_per_epoch, changed))
                pseudo = new
            i_tr = tr_stream.next()
            kd = f = self_ = im = ent = div = None
            if terms.f > 0:
                i_ti = ti_stream.next()
                feats_ti = forward_encoder(f_t, Tensor(ti.target[i_ti]))
                f = l_f(Tensor(f_ti_s_all[i_ti]), feats_ti)
            # the TR forward runs last so the frozen statistics describe TR target data
            probs = ops.softmax(forward_classifier(c_t, forward_encoder(f_t, Tensor(x_t[i_tr]))))
            if terms.kd > 0:
                kd = l_kd(probs, Tensor(teacher[i_tr]), direction=cfg.kd_direction)
            if pseudo is not None and terms.self_ > 0:
                self_ = l_self(probs, pseudo[i_tr])
            if terms.im > 0:
                ent, div, im = l_im(probs)
            check_finite(stage, it, l_kd=kd, l_f=f, l_self=self_, l_im=im)
            total = _combine(terms, kd, f, self_, im)
            total.backward()
            sgd_step(params, opt)
            state.log({"l_kd": kd, "l_f": f, "l_self": self_, "l_ent": ent, "l_div": div,
                       "l_im": im, "total": total})
    return f_t, c_t, state


def _combine(terms: TargetTerms, kd, f, self_, im) -> Tensor:
    if kd is not None:
        total = l_tgkt(kd, f if f is not None else 0.0, self_ if self_ is not None else 0.0,
                       _weights(terms, f is not None, self_ is not None))
    else:
        total = None
        for w, t in ((terms.f, f), (terms.self_, self_)):
            if t is not None and w > 0:
                total = ops.scale(t, w) if total is None else total + ops.scale(t, w)
    if im is not None:
        total = ops.scale(im, terms.im) if total is None else total + ops.scale(im, terms.im)
    return total


def _weights(terms: TargetTerms, has_f: bool, has_self: bool) -> LossWeights:
    return LossWeights(beta_f=terms.f if has_f else 0.0, beta_self=terms.self_ if has_self else 0.0)


def _refresh_pseudo(f_t: EncoderParams, c_t: ClassifierParams, x_t: np.ndarray) -> np.ndarray:
    feats = full_batch_features(f_t, x_t)
    with no_grad():
        probs = softmax_np(forward_classifier(c_t, Tensor(feats)).data)
    return pseudo_label(feats, probs).labels


def run_tgkt(data: DatasetBundle, bundle: ModelBundle, translator: TranslatorParams | None, cfg: TrainConfig):
    """Target-model training with the full objective; returns ``(f_t, c_t, state)``."""
    if cfg.stage != "tgkt":
        raise ValueError(f"run_tgkt needs a tgkt config, got stage {cfg.stage!r}")
    if translator is None:
        raise MissingArtifactError("run_tgkt needs a trained translator (run the tgmb stage first)")
    teacher = teacher_probs(bundle, translator, data.tr_target.unlabeled().images)
    return train_target_model(data, bundle, cfg, TargetTerms.from_config(cfg), teacher)
